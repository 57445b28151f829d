#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "phasenet/phasenet.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;  // stdout and stderr interleaved
};

Result run(const std::string& args) {
    const std::string cmd = std::string(PHASENET_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path scratch(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("phasenet_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST(Cli, HelpMatchesGolden) {
    for (const std::string sub : {"", "synth", "train", "score", "eval", "pci", "report"}) {
        const Result r = run(sub.empty() ? "--help" : sub + " --help");
        EXPECT_EQ(r.code, 0) << sub;
        const fs::path golden = fs::path(PHASENET_GOLDEN_DIR) / ((sub.empty() ? "main" : sub) + "_help.txt");
        EXPECT_EQ(r.out, slurp(golden)) << golden;
    }
}

TEST(Cli, UsageErrors) {
    Result r = run("");
    EXPECT_EQ(r.code, 1);
    r = run("score --normal x.csv --attack y.csv");
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.out.find("--checkpoint"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("Usage"), std::string::npos) << r.out;
    r = run("frobnicate");
    EXPECT_EQ(r.code, 1);
}

TEST(Cli, DataErrorsExitTwo) {
    const fs::path d = scratch("bad");
    std::ofstream(d / "bad.csv") << "a,label\n1,0\n2,oops\n";
    const Result r = run("train --preset tiny --normal " + (d / "bad.csv").string() + " --out-dir " + d.string());
    EXPECT_EQ(r.code, 2) << r.out;
    EXPECT_NE(r.out.find("bad.csv"), std::string::npos) << r.out;
}

TEST(Cli, ConfigErrorsExitOne) {
    const fs::path d = scratch("cfg");
    std::ofstream(d / "n.csv") << "a,label\n1,0\n";
    std::ofstream(d / "c.json") << R"({"preset": "enormous"})";
    const Result r = run("train --config " + (d / "c.json").string() + " --normal " + (d / "n.csv").string());
    EXPECT_EQ(r.code, 1) << r.out;
}

TEST(Cli, EvalPerfectSeparation) {
    const fs::path d = scratch("eval");
    std::ofstream f(d / "scores.csv");
    f << "start_index,score,label,prediction,split\n";
    for (int i = 0; i < 10; ++i) f << i * 60 << ',' << 0.1 + 0.01 * i << ",0,0,val\n";
    for (int i = 0; i < 5; ++i) f << i * 60 << ',' << 0.2 + 0.01 * i << ",0,0,holdout\n";
    for (int i = 0; i < 5; ++i) f << i * 60 << ',' << 5.0 + i << ",1,1,attack\n";
    f.close();
    const Result r = run("eval --scores " + (d / "scores.csv").string() + " --out-dir " + d.string());
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("ROC-AUC           100.00"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("Average precision 100.00"), std::string::npos) << r.out;
    const auto j = nlohmann::json::parse(slurp(d / "eval.json"));
    EXPECT_EQ(j["roc_auc"], 1.0);
}

TEST(Cli, EndToEnd) {
    const fs::path d = scratch("e2e");
    const std::string dir = d.string();
    Result r = run("synth --out-dir " + dir);
    ASSERT_EQ(r.code, 0) << r.out;
    ASSERT_TRUE(fs::exists(d / "normal.csv"));
    ASSERT_TRUE(fs::exists(d / "attack.csv"));

    r = run("train --preset tiny --epochs 2 --quiet --seed 7 --normal " + dir + "/normal.csv --out-dir " + dir);
    ASSERT_EQ(r.code, 0) << r.out;
    for (const char* f : {"model.ckpt", "history.csv", "train_manifest.json"}) EXPECT_TRUE(fs::exists(d / f)) << f;
    std::istringstream hist(slurp(d / "history.csv"));
    std::size_t lines = 0;
    for (std::string l; std::getline(hist, l);) ++lines;
    EXPECT_EQ(lines, 3u);

    r = run("score --checkpoint " + dir + "/model.ckpt --normal " + dir + "/normal.csv --attack " + dir +
            "/attack.csv --out-dir " + dir);
    ASSERT_EQ(r.code, 0) << r.out;
    const std::string scores = slurp(d / "scores.csv");
    EXPECT_EQ(scores.rfind("start_index,score,label,prediction,split\n", 0), 0u);
    EXPECT_NE(scores.find(",attack\n"), std::string::npos);

    r = run("eval --scores " + dir + "/scores.csv --out-dir " + dir);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_NE(r.out.find("ROC-AUC"), std::string::npos);
    EXPECT_TRUE(fs::exists(d / "eval.json"));

    r = run("pci --input " + dir + "/normal.csv --start 0 --start 60 --spectra --checkpoint " + dir +
            "/model.ckpt --out-dir " + dir);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(d / "pci.csv"));
    EXPECT_TRUE(fs::exists(d / "spectra.csv"));

    r = run("report --history " + dir + "/history.csv --scores " + dir + "/scores.csv --out-dir " + dir);
    ASSERT_EQ(r.code, 0) << r.out;
    EXPECT_TRUE(fs::exists(d / "loss_curves.svg"));
    EXPECT_TRUE(fs::exists(d / "score_histogram.svg"));

    // Same seed, same weights. The files differ only in the recorded output paths.
    const fs::path d2 = scratch("e2e_repeat");
    r = run("train --preset tiny --epochs 2 --quiet --seed 7 --normal " + dir + "/normal.csv --out-dir " + d2.string());
    ASSERT_EQ(r.code, 0) << r.out;
    auto a = phasenet::load_checkpoint((d / "model.ckpt").string());
    auto b = phasenet::load_checkpoint((d2 / "model.ckpt").string());
    const auto pa = a.params.all(), pb = b.params.all();
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value) << pa[i]->name;
    EXPECT_EQ(slurp(d / "history.csv"), slurp(d2 / "history.csv"));
}
