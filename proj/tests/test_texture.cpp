#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "vibes/errors.hpp"
#include "vibes/rng.hpp"
#include "vibes/spectral.hpp"
#include "vibes/texture.hpp"

using namespace vibes;
namespace fs = std::filesystem;

namespace {

double rms(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s / double(v.size()));
}

fs::path tmp(const std::string& name) {
    auto dir = fs::temp_directory_path() / "vibes_test_texture";
    fs::create_directories(dir);
    return dir / name;
}

void write(const fs::path& p, const std::string& body) {
    std::ofstream(p) << body;
}

}  // namespace

TEST_CASE("ladder matches the grit table") {
    const auto& l = default_ladder();
    REQUIRE(l.size() == 5);
    CHECK(l[0] == SandpaperSpec{"P60", 264});
    CHECK(l[2] == SandpaperSpec{"P120", 127});
    CHECK(l[4] == SandpaperSpec{"P1000", 18});
    CHECK(reference_sandpaper().fepa_grade == "P120");
    CHECK_THROWS_AS(find_grade(l, "P400"), ValidationError);
    CHECK_THROWS(validate_ladder({{"A", 10}, {"A", 20}}));
    CHECK_THROWS(validate_ladder({{"A", -1}}));
}

TEST_CASE("rougher grit gives larger |a|") {
    SynthParams p;
    const auto& l = default_ladder();
    double prev = INFINITY;
    for (const auto& s : l) {
        const double r = rms(magnitude(synth_texture(s, p)));
        CHECK(r < prev);
        prev = r;
    }
}

TEST_CASE("RMS of |a| follows gain * grit^gamma") {
    SynthParams p;
    p.gain_k = 0.01;
    p.exponent_gamma = 1.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        p.seed = seed;
        const auto t = synth_texture({"P120", 127}, p);
        CHECK(rms(magnitude(t)) == doctest::Approx(1.27).epsilon(0.05));
    }
    p.exponent_gamma = 0.5;
    CHECK(rms(magnitude(synth_texture({"P60", 264}, p))) == doctest::Approx(0.01 * std::sqrt(264.0)).epsilon(0.05));
}

TEST_CASE("gain_k = 0 gives an all-zero trace") {
    SynthParams p;
    p.gain_k = 0.0;
    const auto t = synth_texture({"P60", 264}, p);
    for (const auto& s : t.samples) CHECK((s.ax == 0.0 && s.ay == 0.0 && s.az == 0.0));
}

TEST_CASE("synthesized power lies in the band") {
    SynthParams p;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        p.seed = seed;
        const auto t = synth_texture({"P80", 195}, p);
        std::vector<double> ax(t.size());
        for (std::size_t i = 0; i < t.size(); ++i) ax[i] = t.samples[i].ax;
        CHECK(band_power_fraction(ax, t.rate_hz, p.band_lo_hz, p.band_hi_hz) >= 0.95);
    }
}

TEST_CASE("synthesis is deterministic and seed dependent") {
    SynthParams p;
    p.seed = 42;
    const auto a = synth_texture({"P60", 264}, p);
    const auto b = synth_texture({"P60", 264}, p);
    REQUIRE(a.size() == b.size());
    bool same = true;
    for (std::size_t i = 0; i < a.size(); ++i)
        same = same && a.samples[i].ax == b.samples[i].ax && a.samples[i].az == b.samples[i].az;
    CHECK(same);
    p.seed = 43;
    CHECK(synth_texture({"P60", 264}, p).samples[10].ax != a.samples[10].ax);
    CHECK(a.size() == std::size_t(p.rate_hz * p.duration_s));
}

TEST_CASE("invalid synthesis parameters are rejected") {
    SynthParams p;
    p.band_lo_hz = 500;
    p.band_hi_hz = 400;
    CHECK_THROWS_AS(synth_texture({"P60", 264}, p), ParameterError);
    p = {};
    p.band_hi_hz = p.rate_hz / 2;
    CHECK_THROWS_AS(p.validate(), ParameterError);
    p = {};
    p.duration_s = 0;
    CHECK_THROWS_AS(p.validate(), ParameterError);
    p = {};
    CHECK_THROWS_AS(synth_texture({"X", 0.0}, p), ParameterError);
}

TEST_CASE("1 kHz CSV loads with rate 1000") {
    std::string body = "t,ax,ay,az\n";
    for (int i = 0; i < 1000; ++i) body += std::to_string(i / 1000.0) + ",0.1,0.2,0.3\n";
    write(tmp("k1.csv"), body);
    const auto t = load_trace(tmp("k1.csv"));
    CHECK(t.rate_hz == 1000.0);
    CHECK(t.size() == 1000);
    CHECK(t.samples[5].ay == 0.2);
}

TEST_CASE("duplicated timestamp names the line") {
    write(tmp("dup.csv"), "t,ax,ay,az\n0,0,0,0\n0.001,0,0,0\n0.001,0,0,0\n0.003,0,0,0\n");
    try {
        load_trace(tmp("dup.csv"));
        FAIL("expected an error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
}

TEST_CASE("malformed and non-uniform traces are rejected") {
    write(tmp("bad.csv"), "t,ax,ay,az\n0,0,0,0\n0.001,abc,0,0\n");
    try {
        load_trace(tmp("bad.csv"));
        FAIL("expected an error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
    write(tmp("gap.csv"), "t,ax,ay,az\n0,0,0,0\n0.001,0,0,0\n0.002,0,0,0\n0.004,0,0,0\n");
    CHECK_THROWS(load_trace(tmp("gap.csv")));
    write(tmp("slow.csv"), "t,ax,ay,az\n0,0,0,0\n0.01,0,0,0\n0.02,0,0,0\n");
    CHECK_THROWS(load_trace(tmp("slow.csv")));
    CHECK_THROWS_AS(load_trace(tmp("missing.csv")), IoError);
}

TEST_CASE("save then load round-trips") {
    SynthParams p;
    p.seed = 9;
    const auto a = synth_texture({"P220", 65}, p);
    save_trace(a, tmp("rt.csv"));
    const auto b = load_trace(tmp("rt.csv"));
    REQUIRE(b.size() == a.size());
    CHECK(b.rate_hz == a.rate_hz);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.samples[i].t - b.samples[i].t));
        worst = std::max(worst, std::abs(a.samples[i].ax - b.samples[i].ax));
        worst = std::max(worst, std::abs(a.samples[i].az - b.samples[i].az));
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("texture bank holds two variants per grade") {
    SynthParams p;
    const auto bank = synth_bank(default_ladder(), p);
    CHECK_NOTHROW(bank.require_complete(2));
    CHECK(bank.get("P60", 1).samples[3].ax != bank.get("P60", 2).samples[3].ax);
    CHECK_THROWS_AS(bank.get("P60", 3), ValidationError);
    CHECK(variant_seed(1, "P60", 1) != variant_seed(1, "P60", 2));
    CHECK(variant_seed(1, "P60", 1) != variant_seed(2, "P60", 1));
}

TEST_CASE("seed derivation is stable and separates components") {
    CHECK(derive_seed(7, "plan", 1) == derive_seed(7, "plan", 1));
    CHECK(derive_seed(7, "plan", 1) != derive_seed(7, "plan", 2));
    CHECK(derive_seed(7, "plan", 1) != derive_seed(7, "observer", 1));
}
