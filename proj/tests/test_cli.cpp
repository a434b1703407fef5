#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "acdk/io.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class Cli : public ::testing::Test {
protected:
    testutil::TempDir dir;

    Result run(const std::string& args) {
        const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
        const std::string cmd = std::string("ACDK_THREADS=1 '") + ACDK_CLI + "' " + args + " > '" + out.string() +
                                "' 2> '" + err.string() + "'";
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(out);
        r.err = slurp(err);
        return r;
    }

    std::string p(const std::string& name) const { return (dir / name).string(); }
};

}  // namespace

TEST_F(Cli, HelpSnapshots) {
    const bool update = std::getenv("ACDK_UPDATE_SNAPSHOTS") != nullptr;
    for (const std::string sub : {"", "corrupt", "schedule-corrupt", "datagen", "train", "eval", "sdr-map", "gradcheck",
                                  "report"}) {
        const Result r = run(sub + " --help");
        EXPECT_EQ(r.code, 0) << sub;
        const fs::path snap = fs::path(ACDK_SNAPSHOT_DIR) / ((sub.empty() ? "acdk" : sub) + ".txt");
        if (update) {
            std::ofstream(snap, std::ios::binary) << r.out;
            continue;
        }
        EXPECT_EQ(r.out, slurp(snap)) << "help for '" << sub << "' differs from " << snap;
    }
}

TEST_F(Cli, UsageErrorsExitOne) {
    EXPECT_EQ(run("").code, 1);
    EXPECT_EQ(run("bogus").code, 1);
    EXPECT_EQ(run("datagen --count 2 --out x --unknown-flag").code, 1);
    EXPECT_EQ(run("corrupt --kind fog --severity 6 --in a --out b").code, 1);
    EXPECT_EQ(run("corrupt --kind haze --severity 2 --in a --out b").code, 1);
    EXPECT_EQ(run("datagen --count 2 --size 12 --out x").code, 1);
    EXPECT_EQ(run("sdr-map --disparity d.pfm --query 1 --out h.pgm").code, 1);
    EXPECT_EQ(run("report --out r").code, 1);
}

TEST_F(Cli, RuntimeErrorsExitTwo) {
    const Result r = run("corrupt --kind fog --severity 2 --in " + p("missing") + " --out " + p("o"));
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
    EXPECT_EQ(run("eval --ckpt " + p("none.acdk") + " --data " + p("none") + " --report " + p("r.jsonl")).code, 2);
}

TEST_F(Cli, CorruptAndScheduleAreDeterministic) {
    ASSERT_EQ(run("datagen --count 3 --size 16 --seed 4 --out " + p("data")).code, 0);
    for (const char* o : {"c1", "c2"})
        ASSERT_EQ(run("corrupt --kind snow --severity 3 --seed 9 --in " + p("data") + " --out " + p(o)).code, 0);
    EXPECT_EQ(slurp(dir / "c1" / "scene_00001.ppm"), slurp(dir / "c2" / "scene_00001.ppm"));
    EXPECT_NE(slurp(dir / "c1" / "scene_00001.ppm"), slurp(dir / "data" / "scene_00001.ppm"));

    for (const char* o : {"s1", "s2"})
        ASSERT_EQ(run("schedule-corrupt --p-blur 0.5 --p-weather 0.5 --seed 2 --in " + p("data") + " --out " + p(o) +
                      " --log " + p(o) + ".jsonl")
                      .code,
                  0);
    EXPECT_EQ(slurp(p("s1.jsonl")), slurp(p("s2.jsonl")));
    EXPECT_EQ(slurp(dir / "s1" / "scene_00002.ppm"), slurp(dir / "s2" / "scene_00002.ppm"));
    std::istringstream log(slurp(p("s1.jsonl")));
    std::string line;
    int rows = 0;
    while (std::getline(log, line)) {
        const auto row = nlohmann::json::parse(line);
        EXPECT_EQ(row["kinds"].size(), row["severities"].size());
        EXPECT_EQ(row["kinds"][0], "dark");
        EXPECT_EQ(row["kinds"].size(), 2u);  // p_blur + p_weather = 1
        ++rows;
    }
    EXPECT_EQ(rows, 3);
}

TEST_F(Cli, TrainEvalReportPipeline) {
    ASSERT_EQ(run("datagen --count 4 --size 16 --seed 5 --out " + p("data")).code, 0);
    std::ofstream(dir / "cfg.txt") << "epochs = 2\nbatch_size = 2\nsdr.patch_size = 4\npretrain_steps = 3\nseed = 1\n";
    for (const char* n : {"a", "b"}) {
        const Result r = run("train --config " + p("cfg.txt") + " --data " + p("data") + " --out " + p(n) + ".acdk --log " +
                             p(n) + ".jsonl --quiet");
        ASSERT_EQ(r.code, 0) << r.err;
    }
    EXPECT_EQ(slurp(p("a.acdk")), slurp(p("b.acdk")));
    EXPECT_EQ(slurp(p("a.jsonl")), slurp(p("b.jsonl")));

    std::ofstream(dir / "pairs.jsonl") << R"({"image": "scene_00000.ppm", "ax": 0, "ay": 0, "bx": 0, "by": 15, "closer": "b"})"
                                       << "\n";
    const Result e = run("eval --ckpt " + p("a.acdk") + " --data " + p("data") +
                         " --kinds fog,dark --severities 1,3 --seed 3 --report " + p("sweep.jsonl") + " --pairs " +
                         p("pairs.jsonl"));
    ASSERT_EQ(e.code, 0) << e.err;
    std::istringstream rows(slurp(p("sweep.jsonl")));
    std::string line, third_absrel;
    int n = 0;
    while (std::getline(rows, line)) {
        const auto row = nlohmann::json::parse(line);
        if (n == 0) EXPECT_EQ(row["kind"], "clean");
        if (n == 2) third_absrel = row["absrel"].dump();
        ++n;
    }
    EXPECT_EQ(n, 5);
    EXPECT_NE(e.out.find("ordinal"), std::string::npos) << e.out;

    const Result r1 = run("report --steps " + p("a.jsonl") + " --sweep " + p("sweep.jsonl") + " --out " + p("rep1"));
    const Result r2 = run("report --steps " + p("a.jsonl") + " --sweep " + p("sweep.jsonl") + " --out " + p("rep2"));
    ASSERT_EQ(r1.code, 0) << r1.err;
    const std::string summary = slurp(dir / "rep1" / "summary.txt");
    EXPECT_EQ(summary, slurp(dir / "rep2" / "summary.txt"));
    EXPECT_EQ(summary.rfind("kind\tabsrel@0\tdelta1@0\tabsrel@1\tdelta1@1\tabsrel@3\tdelta1@3\n", 0), 0u) << summary;
    EXPECT_NE(summary.find("fog\t-\t-\t"), std::string::npos);
    EXPECT_NE(summary.find("\t" + third_absrel + "\t"), std::string::npos);
    EXPECT_NE(summary.find("steps 4\n"), std::string::npos);
}

TEST_F(Cli, ReportEdgeCases) {
    std::ofstream(dir / "empty.jsonl");
    const Result r = run("report --sweep " + p("empty.jsonl") + " --out " + p("rep"));
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(slurp(dir / "rep" / "summary.txt"), "kind\n");

    std::ofstream(dir / "verbatim.jsonl") << R"({"kind":"clean","severity":0,"absrel":0.1234567890123,"delta1":1})"
                                          << "\n";
    ASSERT_EQ(run("report --sweep " + p("verbatim.jsonl") + " --out " + p("v")).code, 0);
    EXPECT_EQ(slurp(dir / "v" / "summary.txt"), "kind\tabsrel@0\tdelta1@0\nclean\t0.1234567890123\t1\n");

    std::ofstream(dir / "bad.jsonl") << R"({"kind":"clean","severity":0,"absrel":0.1,"delta1":1})" << "\n{oops\n";
    const Result bad = run("report --sweep " + p("bad.jsonl") + " --out " + p("b"));
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.err.find("bad.jsonl:2"), std::string::npos) << bad.err;
}

TEST_F(Cli, SdrMapAndReportHeatmaps) {
    acdk::DisparityMap d(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) d.at(y, x) = 0.1 + 0.05 * x;
    acdk::save_pfm(d, dir / "d.pfm");
    ASSERT_EQ(run("sdr-map --disparity " + p("d.pfm") + " --patch 4 --query 1,1 --out " + p("h.pgm")).code, 0);
    const acdk::ImageBuffer h = acdk::load_image(dir / "h.pgm");
    EXPECT_EQ(h.height, 16);
    EXPECT_EQ(h.channels, 1);
    EXPECT_EQ(h.at(5, 5, 0), 0.0);
    EXPECT_EQ(run("sdr-map --disparity " + p("d.pfm") + " --patch 4 --query 9,0 --out " + p("x.pgm")).code, 2);

    ASSERT_EQ(run("report --disparity " + p("d.pfm") + " --patch 4 --query 0,0 --query 3,2 --out " + p("r")).code, 0);
    EXPECT_TRUE(fs::exists(dir / "r" / "sdr_0_0.pgm"));
    EXPECT_TRUE(fs::exists(dir / "r" / "sdr_3_2.pgm"));
}

TEST_F(Cli, Gradcheck) {
    const Result ok = run("gradcheck");
    EXPECT_EQ(ok.code, 0);
    for (const char* g : {"max relative error loss", "max relative error sdr", "max relative error model"})
        EXPECT_NE(ok.out.find(g), std::string::npos) << g;
    EXPECT_NE(ok.out.find("PASS"), std::string::npos);

    const Result bad = run("gradcheck --inject-fault");
    EXPECT_EQ(bad.code, 2);
    EXPECT_NE(bad.out.find("worst dec2.weight["), std::string::npos) << bad.out;
}
