#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "tokenlab/errors.hpp"
#include "tokenlab/run_config.hpp"
#include "test_util.hpp"

using namespace tokenlab;
using tokenlab::test::expect_error;
using tokenlab::test::tmp_path;

namespace {

RunConfig demo_config() {
    RunConfig cfg;
    cfg.declare("seed", "0");
    cfg.declare("iters", "100");
    cfg.declare("rate", "0.5");
    cfg.declare("grid", "4,16,64");
    cfg.declare("verbose", "false");
    cfg.declare("name", "demo");
    return cfg;
}

} // namespace

TEST_CASE("declared defaults and typed access") {
    const RunConfig cfg = demo_config();
    CHECK(cfg.has("seed"));
    CHECK(!cfg.has("seeds"));
    CHECK(cfg.get_u64("seed") == 0);
    CHECK(cfg.get_int("iters") == 100);
    CHECK(cfg.get_real("rate") == 0.5);
    CHECK(cfg.get_str("name") == "demo");
    CHECK(cfg.get_bool("verbose") == false);
    CHECK(cfg.get_u64_list("grid") == std::vector<std::uint64_t>{4, 16, 64});
}

TEST_CASE("set overrides declared keys only") {
    RunConfig cfg = demo_config();
    cfg.set("iters", "250");
    CHECK(cfg.get_int("iters") == 250);

    const std::string msg = expect_error(ErrorCode::config_error, [&] {
        cfg.set("itres", "250");
    });
    CHECK(msg == "unknown config key 'itres'");
    expect_error(ErrorCode::config_error, [&] { cfg.get_str("missing"); });
}

TEST_CASE("bool and list parsing") {
    RunConfig cfg = demo_config();
    for (const char* v : {"true", "1"}) {
        cfg.set("verbose", v);
        CHECK(cfg.get_bool("verbose") == true);
    }
    for (const char* v : {"false", "0"}) {
        cfg.set("verbose", v);
        CHECK(cfg.get_bool("verbose") == false);
    }
    cfg.set("verbose", "yes");
    expect_error(ErrorCode::config_error, [&] { cfg.get_bool("verbose"); });

    cfg.set("grid", "8");
    CHECK(cfg.get_u64_list("grid") == std::vector<std::uint64_t>{8});
    cfg.set("grid", "1.5,2.25");
    CHECK(cfg.get_real_list("grid") == std::vector<double>{1.5, 2.25});
}

TEST_CASE("parse failures carry the key and offending value") {
    RunConfig cfg = demo_config();
    cfg.set("iters", "twelve");
    const std::string msg = expect_error(ErrorCode::config_error, [&] {
        cfg.get_int("iters");
    });
    CHECK(msg.find("config key 'iters'") != std::string::npos);
    CHECK(msg.find("'twelve'") != std::string::npos);

    // Unsigned accessor rejects negative input rather than wrapping.
    cfg.set("seed", "-3");
    expect_error(ErrorCode::config_error, [&] { cfg.get_u64("seed"); });
    CHECK(cfg.get_int("seed") == -3);

    cfg.set("rate", "0.5x");
    expect_error(ErrorCode::config_error, [&] { cfg.get_real("rate"); });
    cfg.set("grid", "4,,8");
    expect_error(ErrorCode::config_error, [&] { cfg.get_u64_list("grid"); });
}

TEST_CASE("config files parse comments, blanks and whitespace") {
    const std::string path = tmp_path("run.cfg");
    {
        std::ofstream out(path);
        out << "# experiment setup\n";
        out << "\n";
        out << "  seed = 42   # trailing comment\n";
        out << "rate=0.25\n";
        out << "name = spaced value\n";
    }
    RunConfig cfg = demo_config();
    cfg.load_file(path);
    CHECK(cfg.get_u64("seed") == 42);
    CHECK(cfg.get_real("rate") == 0.25);
    CHECK(cfg.get_str("name") == "spaced value");
    CHECK(cfg.get_int("iters") == 100); // untouched default
    std::remove(path.c_str());
}

TEST_CASE("file errors carry path and line number") {
    const std::string path = tmp_path("bad.cfg");
    {
        std::ofstream out(path);
        out << "seed=1\n";
        out << "bogus_key=3\n";
    }
    RunConfig cfg = demo_config();
    std::string msg = expect_error(ErrorCode::config_error, [&] { cfg.load_file(path); });
    CHECK(msg == path + ":2: unknown config key 'bogus_key'");

    {
        std::ofstream out(path);
        out << "just some words\n";
    }
    msg = expect_error(ErrorCode::config_error, [&] { cfg.load_file(path); });
    CHECK(msg == path + ":1: expected key=value");

    {
        std::ofstream out(path);
        out << "=5\n";
    }
    msg = expect_error(ErrorCode::config_error, [&] { cfg.load_file(path); });
    CHECK(msg == path + ":1: empty key");

    msg = expect_error(ErrorCode::io_error, [&] { cfg.load_file(tmp_path("nope.cfg")); });
    CHECK(msg == "cannot open config file: " + tmp_path("nope.cfg"));
    std::remove(path.c_str());
}

TEST_CASE("resolved text preserves declaration order") {
    RunConfig cfg = demo_config();
    cfg.set("verbose", "true");
    CHECK(cfg.resolved_text() ==
          "seed=0\niters=100\nrate=0.5\ngrid=4,16,64\nverbose=true\nname=demo\n");

    const nlohmann::ordered_json j = cfg.to_json();
    CHECK(j["seed"] == "0");
    CHECK(j["verbose"] == "true");
    // Declaration order survives serialization too.
    CHECK(j.begin().key() == "seed");
}
