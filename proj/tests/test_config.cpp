#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ulb/checkpoint.hpp"
#include "ulb/config.hpp"
#include "ulb/nn.hpp"

using namespace ulb;

TEST_CASE("config parsing") {
    const ConfigMap cfg = ConfigMap::parse_text(
        "# comment\n"
        "a.b = 3\n"
        "a.c = hello world\n"
        "flag = true\n"
        "rate = 0.25  # trailing comment\n"
        "\n");
    CHECK(cfg.get_int("a.b", 0) == 3);
    CHECK(cfg.get("a.c") == "hello world");
    CHECK(cfg.get_bool("flag", false));
    CHECK(cfg.get_double("rate", 0.0) == doctest::Approx(0.25));
    CHECK(cfg.get_or("missing", "fallback") == "fallback");
    CHECK_THROWS_AS(cfg.get("missing"), UsageError);
    CHECK_THROWS_AS(cfg.get_int("a.c", 0), UsageError);
}

TEST_CASE("config parse errors carry the line") {
    try {
        ConfigMap::parse_text("a = 1\nnot a pair\n", "test.cfg");
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("test.cfg:2") != std::string::npos);
    }
}

TEST_CASE("overrides replace or insert") {
    ConfigMap cfg = ConfigMap::parse_text("a = 1\n");
    cfg.apply_override("a=2");
    cfg.apply_override("b.c = 7");
    CHECK(cfg.get_int("a", 0) == 2);
    CHECK(cfg.get_int("b.c", 0) == 7);
    CHECK_THROWS_AS(cfg.apply_override("no-equals"), UsageError);
    CHECK_THROWS_AS(cfg.apply_override("=value"), UsageError);
}

TEST_CASE("serialization round trips") {
    ConfigMap cfg;
    cfg.set("x", "1");
    cfg.set("y.z", "two");
    const ConfigMap back = ConfigMap::parse_text(cfg.serialize());
    CHECK(back.serialize() == cfg.serialize());
    CHECK(back.entries() == cfg.entries());
}

TEST_CASE("missing config file is a usage error") {
    CHECK_THROWS_AS(ConfigMap::parse_file("/nonexistent/ulb.cfg"), UsageError);
}

TEST_CASE("checkpoint round trip") {
    const Architecture arch{{5, 7, 3}};
    const ParamsF p = init_params<float>(arch, 12345);
    const auto path = std::filesystem::temp_directory_path() / "ulb_ckpt.bin";
    save_checkpoint(p, path);
    const ParamsF back = load_checkpoint(path);
    CHECK(back == p);
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects foreign files") {
    const auto path = std::filesystem::temp_directory_path() / "ulb_not_ckpt.bin";
    {
        std::ofstream os(path, std::ios::binary);
        os << "BOGUS DATA";
    }
    CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/model.bin"), std::runtime_error);
}
