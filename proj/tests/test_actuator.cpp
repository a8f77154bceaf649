#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "vibes/actuator.hpp"
#include "vibes/errors.hpp"

using namespace vibes;

namespace {

constexpr double kFs = 2000.0;

PwmStream constant_drive(double duty, double seconds, double frame_rate = 1000.0) {
    PwmStream p;
    p.frame_rate_hz = frame_rate;
    for (std::size_t i = 0; i < std::size_t(seconds * frame_rate); ++i) p.frames.push_back({double(i) / frame_rate, duty});
    return p;
}

std::vector<double> sine(double f, double seconds, double fs = kFs) {
    std::vector<double> x(std::size_t(seconds * fs));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * f * double(i) / fs);
    return x;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> d;
    std::vector<double> x(n);
    for (auto& v : x) v = d(g);
    return x;
}

std::vector<double> xs(const AccelTrace& t, std::size_t from = 0) {
    std::vector<double> out;
    for (std::size_t i = from; i < t.size(); ++i) out.push_back(t.samples[i].ax);
    return out;
}

double rms(const std::vector<double>& v) {
    return std::sqrt(oracle::energy(v) / double(v.size()));
}

}  // namespace

TEST_CASE("zero drive leaves the noise floor") {
    ActuatorModel m;
    const auto carrier = sine(200, 2);
    const auto r = render(constant_drive(0.0, 2), m, carrier, kFs, 3);
    CHECK(rms(xs(r)) == doctest::Approx(m.noise_floor_rms).epsilon(0.2));
    m.noise_floor_rms = 0.0;
    for (double v : xs(render(constant_drive(0.0, 2), m, carrier, kFs, 3))) CHECK(v == 0.0);
}

TEST_CASE("200 Hz carrier at constant duty") {
    ActuatorModel m;
    m.noise_floor_rms = 0.0;
    const double d = 0.4;
    const auto r = render(constant_drive(d, 2), m, sine(200, 2), kFs, 1);
    const double expected = m.gain * d * oracle::bandpass_hp2_lp2(200, 50, 500, kFs) / std::sqrt(2.0);
    CHECK(rms(xs(r, 1000)) == doctest::Approx(expected).epsilon(0.05));
    CHECK(m.band_gain(200, kFs) == doctest::Approx(oracle::bandpass_hp2_lp2(200, 50, 500, kFs)).epsilon(1e-9));
}

TEST_CASE("render output is linear in gain") {
    ActuatorModel m;
    m.noise_floor_rms = 0.0;
    const auto c = noise(2000, 4);
    const double a = rms(xs(render(constant_drive(0.3, 1), m, c, kFs, 1)));
    m.gain *= 2;
    const double b = rms(xs(render(constant_drive(0.3, 1), m, c, kFs, 1)));
    CHECK(b == doctest::Approx(2 * a).epsilon(1e-6));
}

TEST_CASE("render is deterministic and split into clean plus noise") {
    ActuatorModel m;
    const auto c = noise(2000, 8);
    const auto drive = constant_drive(0.5, 1);
    const auto a = render(drive, m, c, kFs, 77);
    const auto b = render(drive, m, c, kFs, 77);
    CHECK(xs(a) == xs(b));
    auto clean = render_clean(drive, m, c, kFs);
    add_noise(clean, m.noise_floor_rms, 77);
    CHECK(xs(clean) == xs(a));
    CHECK(xs(render(drive, m, c, kFs, 78)) != xs(a));
}

TEST_CASE("render rejects a slow drive and bad models") {
    ActuatorModel m;
    CHECK_THROWS_AS(render(constant_drive(0.5, 1, 500), m, sine(200, 1), kFs, 1), ParameterError);
    m.gain = 0;
    CHECK_THROWS_AS(m.validate(), ParameterError);
}

TEST_CASE("self comparison is the identity triple") {
    const auto s = noise(4000, 1);
    const auto c = compare_render(s, s, kFs);
    CHECK(c.rms_error == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c.spectral_coherence_mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(c.envelope_correlation == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("aligned error ignores scale") {
    const auto s = noise(4000, 2);
    std::vector<double> r(s);
    for (auto& v : r) v *= 2;
    const auto c = compare_render(s, r, kFs);
    CHECK(c.rms_error < 1e-12);
    CHECK(c.spectral_coherence_mean == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("independent noise is incoherent") {
    int good = 0;
    const int runs = 40;
    for (int i = 0; i < runs; ++i) {
        const auto s = noise(8000, 100 + i), r = noise(8000, 500 + i);
        const auto c = compare_render(s, r, kFs);
        good += c.spectral_coherence_mean < 0.2 && std::abs(c.envelope_correlation) < 0.2;
    }
    CHECK(good >= int(0.95 * runs));
}

TEST_CASE("coherence values are bounded") {
    const auto s = noise(3000, 1), n = noise(3000, 2);
    std::vector<double> r(s.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = s[i] + 0.5 * n[i];
    for (double v : coherence(s, r, 256)) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
    }
}

TEST_CASE("length mismatch") {
    const auto s = noise(4000, 1);
    std::vector<double> r(s.begin(), s.begin() + 3800);
    CHECK_NOTHROW(compare_render(s, r, kFs));
    std::vector<double> short_r(s.begin(), s.begin() + 3000);
    CHECK_THROWS_AS(compare_render(s, short_r, kFs), ValidationError);
    CHECK_THROWS(compare_render({}, {}, kFs));
}

TEST_CASE("rendered texture follows its source") {
    const auto s = noise(4000, 9);
    ActuatorModel m;
    m.noise_floor_rms = 0.05;
    PwmStream drive = constant_drive(0.6, 2);
    const auto r = render(drive, m, s, kFs, 1);
    const auto c = compare_render(s, xs(r), kFs);
    CHECK(c.spectral_coherence_mean > 0.8);
}

TEST_CASE("helpers") {
    CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}) == doctest::Approx(1.0));
    CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(pearson(std::vector<double>{1, 1, 1}, std::vector<double>{3, 2, 1}) == 0.0);
    const std::vector<double> k(11, -2.0);
    for (double v : moving_rms(k, 5)) CHECK(v == doctest::Approx(2.0));
}
