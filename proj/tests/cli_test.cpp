#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "modal/cli.hpp"
#include "modal/io.hpp"

using namespace modal;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("modal_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override {
        fs::remove_all(dir_);
        unsetenv("DECOMPOSE_THREADS");
    }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void put(const std::string& name, const std::string& text) const { detail::write_file(path(name), text); }

    std::string get(const std::string& name) const { return detail::read_file(path(name)); }

    int run(std::vector<std::string> args) {
        args.insert(args.begin(), "modal");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        out_.str("");
        err_.str("");
        return run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
    }

    fs::path dir_;
    std::ostringstream out_, err_;
};

TEST_F(CliTest, LoadsRealCsv) {
    put("s.csv", "0,1.5\n1,-2\n2,0.25\n");
    const auto s = load_signal(path("s.csv"));
    EXPECT_EQ(s.grid.size(), 3u);
    EXPECT_EQ(s.grid.value_kind, ValueKind::Real);
    EXPECT_EQ(s.z.values, (std::vector<double>{1.5, -2, 0.25}));
}

TEST_F(CliTest, LoadsComplexCsvWithHeader) {
    put("s.csv", "x,re,im\n0,1,2\n0.5,3,4\n");
    const auto s = load_signal(path("s.csv"));
    EXPECT_EQ(s.grid.value_kind, ValueKind::Complex);
    EXPECT_EQ(s.grid.points, (std::vector<double>{0, 0.5}));
    EXPECT_EQ(s.z.values, (std::vector<double>{1, 2, 3, 4}));
}

TEST_F(CliTest, RejectsBadCsv) {
    put("empty.csv", "");
    try {
        load_signal(path("empty.csv"));
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("no samples"), std::string::npos);
    }
    put("bad.csv", "0,1\n1,oops\n");
    try {
        load_signal(path("bad.csv"));
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
    put("nan.csv", "0,1\n1,nan\n");
    EXPECT_THROW(load_signal(path("nan.csv")), InputError);
    put("ragged.csv", "0,1,2\n1,3\n");
    EXPECT_THROW(load_signal(path("ragged.csv")), InputError);
    EXPECT_THROW(load_signal(path("missing.csv")), InputError);
}

TEST_F(CliTest, LoadsJson) {
    put("s.json", R"([{"x": 0, "z": [1, -1]}, {"x": 1, "z": [0.5, 2]}])");
    const auto s = load_signal(path("s.json"));
    EXPECT_EQ(s.grid.value_kind, ValueKind::Complex);
    EXPECT_EQ(s.z.values, (std::vector<double>{1, -1, 0.5, 2}));
}

TEST_F(CliTest, SynthRoundTripsExactly) {
    ASSERT_EQ(run({"synth", "--sources", "1+0.5i@0.2", "--samples", "8", "--out", path("s.csv")}), 0) << err_.str();
    const auto s = load_signal(path("s.csv"));
    const SpectralModel model;
    const SourceMultiset truth(model.space(), {{{1.0, 0.5}, {0.2}}});
    EXPECT_EQ(s.z, evaluate_S(model, s.grid, truth));

    const auto t = read_truth(path("s.csv.truth.json"));
    EXPECT_EQ(t.model, "spectral");
    EXPECT_EQ(multiset_distance(SourceMultiset(t.space, t.sources), truth), 0.0);
}

TEST_F(CliTest, NoisySynthIsReproducible) {
    for (const char* name : {"a.csv", "b.csv"}) {
        ASSERT_EQ(run({"synth", "--sources", "1@0.1;0.5-0.5i@-0.3", "--sigma", "0.1", "--seed", "5", "--out",
                       path(name)}),
                  0);
    }
    EXPECT_EQ(get("a.csv"), get("b.csv"));
    ASSERT_EQ(run({"synth", "--sources", "1@0.1", "--sigma", "0.1", "--seed", "6", "--out", path("c.csv")}), 0);
    EXPECT_NE(get("a.csv"), get("c.csv"));
}

TEST_F(CliTest, SynthRejectsMalformedSources) {
    EXPECT_EQ(run({"synth", "--sources", "1+i", "--out", path("s.csv")}), 1);
    EXPECT_EQ(run({"synth", "--sources", "abc@0.1", "--out", path("s.csv")}), 1);
    EXPECT_EQ(run({"synth", "--out", path("s.csv")}), 1);
}

TEST_F(CliTest, DecomposeWritesConsistentReport) {
    ASSERT_EQ(run({"synth", "--sources", "1+0i@0.30;0.8+0i@0.31", "--samples", "16", "--out", path("s.csv")}), 0);
    ASSERT_EQ(run({"decompose", "--input", path("s.csv"), "--out", path("r.json"), "--curve", path("c.csv"),
                   "--max-sources", "3", "--seed", "1"}),
              0)
        << out_.str() << err_.str();
    EXPECT_NE(out_.str().find("detected_count=2"), std::string::npos) << out_.str();

    const auto rep = parse_report_json(get("r.json"));
    EXPECT_EQ(rep.strategy, "kp-up");
    EXPECT_EQ(rep.detected_count, 2u);
    ASSERT_EQ(rep.local_radius.size(), 3u);

    std::istringstream curve(get("c.csv"));
    std::string line;
    std::getline(curve, line);
    EXPECT_EQ(line, "n,local_radius,squared_residual");
    for (std::size_t n = 1; n <= 3; ++n) {
        ASSERT_TRUE(std::getline(curve, line));
        const auto f = detail::split(line, ',');
        ASSERT_EQ(f.size(), 3u);
        EXPECT_EQ(std::stoul(f[0]), n);
        EXPECT_EQ(*detail::parse_double(f[1]), rep.local_radius[n - 1]);
        EXPECT_EQ(*detail::parse_double(f[2]), rep.squared_residual[n - 1]);
    }
}

TEST_F(CliTest, CsvReportFormat) {
    ASSERT_EQ(run({"synth", "--sources", "1@0.25", "--samples", "12", "--out", path("s.csv")}), 0);
    ASSERT_EQ(run({"decompose", "--input", path("s.csv"), "--out", path("r.csv"), "--format", "csv",
                   "--max-sources", "2"}),
              0);
    const auto text = get("r.csv");
    EXPECT_EQ(text.rfind("# ", 0), 0u);
    EXPECT_NE(text.find("detected_count=1"), std::string::npos);
}

TEST_F(CliTest, StrategiesAgreeOnSingleSource) {
    ASSERT_EQ(run({"synth", "--sources", "0.7-0.2i@-0.15", "--samples", "16", "--out", path("s.csv")}), 0);
    for (const char* strategy : {"jp", "kp-up", "kp-down"}) {
        EXPECT_EQ(run({"decompose", "--input", path("s.csv"), "--out", path("r.json"), "--strategy", strategy,
                       "--max-sources", "3"}),
                  0)
            << strategy << ": " << out_.str();
        EXPECT_EQ(parse_report_json(get("r.json")).detected_count, 1u) << strategy;
    }
}

TEST_F(CliTest, DryRunWritesNothing) {
    ASSERT_EQ(run({"synth", "--sources", "1@0.25", "--out", path("s.csv")}), 0);
    EXPECT_EQ(run({"decompose", "--input", path("s.csv"), "--out", path("r.json"), "--curve", path("c.csv"),
                   "--dry-run"}),
              0);
    EXPECT_NE(out_.str().find("dry run ok"), std::string::npos);
    EXPECT_FALSE(fs::exists(path("r.json")));
    EXPECT_FALSE(fs::exists(path("c.csv")));
}

TEST_F(CliTest, ConfigErrorsExitOne) {
    ASSERT_EQ(run({"synth", "--sources", "1@0.25", "--out", path("s.csv")}), 0);
    put("bad.cfg", "max_sources = 2\nbogus = 3\n");
    EXPECT_EQ(run({"decompose", "--config", path("bad.cfg"), "--input", path("s.csv"), "--out", path("r.json")}), 1);
    EXPECT_NE(err_.str().find("bad.cfg:2"), std::string::npos) << err_.str();

    EXPECT_EQ(run({"decompose", "--input", path("s.csv"), "--out", path("r.json"), "--strategy", "best"}), 1);
    EXPECT_EQ(run({"decompose", "--input", path("s.csv"), "--out", path("r.json"), "--max-sources", "0"}), 1);
    EXPECT_EQ(run({"decompose", "--input", path("s.csv"), "--out", path("r.json"), "--model", "nope"}), 1);
    EXPECT_EQ(run({"decompose", "--input", path("s.csv")}), 1);
    EXPECT_EQ(run({"decompose", "--input", path("absent.csv"), "--out", path("r.json")}), 1);
    EXPECT_EQ(run({"decompose", "--no-such-flag"}), 1);
    EXPECT_EQ(run({}), 1);
    EXPECT_FALSE(fs::exists(path("r.json")));
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
    ASSERT_EQ(run({"synth", "--sources", "1@0.25", "--out", path("s.csv")}), 0);
    put("run.cfg", "# settings\nmax_sources = 2\nstrategy = jp\nformat = json\n");
    ASSERT_EQ(run({"decompose", "--config", path("run.cfg"), "--input", path("s.csv"), "--out", path("r.json"),
                   "--max-sources", "3"}),
              0);
    const auto rep = parse_report_json(get("r.json"));
    EXPECT_EQ(rep.strategy, "jp");
    EXPECT_EQ(rep.local_radius.size(), 3u);
}

TEST_F(CliTest, UndeterminedCountExitsTwo) {
    // Noise with a single allowed count leaves nothing to compare against.
    ASSERT_EQ(run({"synth", "--sources", "1@0.25;1@-0.2", "--sigma", "0.2", "--seed", "3", "--out", path("s.csv")}),
              0);
    EXPECT_EQ(run({"decompose", "--input", path("s.csv"), "--out", path("r.json"), "--max-sources", "1"}), 2);
    EXPECT_NE(out_.str().find("detected_count=0"), std::string::npos);
    EXPECT_TRUE(fs::exists(path("r.json")));
}

TEST_F(CliTest, ModelMismatchIsInputError) {
    put("real.csv", "0,1\n1,2\n2,3\n");
    EXPECT_EQ(run({"decompose", "--input", path("real.csv"), "--out", path("r.json")}), 1);
}

TEST_F(CliTest, ThreadCountDoesNotChangeOutput) {
    ASSERT_EQ(run({"synth", "--sources", "1@0.1;0.6+0.3i@-0.25", "--sigma", "0.01", "--seed", "2", "--out",
                   path("s.csv")}),
              0);
    std::vector<std::string> reports;
    for (const char* threads : {"1", "3"}) {
        setenv("DECOMPOSE_THREADS", threads, 1);
        ASSERT_EQ(run({"decompose", "--input", path("s.csv"), "--out", path("r.json"), "--curve", path("c.csv"),
                       "--seed", "9", "--max-sources", "3"}),
                  0);
        reports.push_back(get("r.json") + get("c.csv"));
    }
    EXPECT_EQ(reports[0], reports[1]);

    setenv("DECOMPOSE_THREADS", "zero", 1);
    EXPECT_EQ(run({"decompose", "--input", path("s.csv"), "--out", path("r.json")}), 1);
}

}  // namespace
