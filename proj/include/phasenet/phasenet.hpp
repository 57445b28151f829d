#pragma once

#include "phasenet/error.hpp"
#include "phasenet/tensor.hpp"
#include "phasenet/autodiff.hpp"
#include "phasenet/ingest.hpp"
#include "phasenet/spectral.hpp"
#include "phasenet/coherence.hpp"
#include "phasenet/model.hpp"
#include "phasenet/checkpoint.hpp"
#include "phasenet/train.hpp"
#include "phasenet/detect.hpp"
#include "phasenet/synth.hpp"
#include "phasenet/run_config.hpp"
#include "phasenet/report.hpp"
