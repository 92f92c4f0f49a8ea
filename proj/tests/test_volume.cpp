#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "stcnn/metrics.hpp"
#include "stcnn/synth.hpp"
#include "stcnn/volume.hpp"

using namespace stcnn;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "stcnn_volume_tests";
    fs::create_directories(dir);
    return dir;
}

Volume4D random_volume(std::int64_t t, std::int64_t d, std::int64_t h, std::int64_t w,
                       std::uint64_t seed) {
    Volume4D vol;
    vol.t = t;
    vol.d = d;
    vol.h = h;
    vol.w = w;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1, 1);
    vol.data.resize(static_cast<std::size_t>(vol.numel()));
    for (auto& v : vol.data) {
        v = static_cast<double>(static_cast<float>(dist(rng)));  // f32-exact values
    }
    return vol;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("volume") {

TEST_CASE("vol4 round trip is byte exact") {
    const fs::path dir = temp_dir();
    Volume4D vol = random_volume(4, 8, 8, 8, 99);
    vol.repetition_time = 0.72;
    const fs::path p1 = dir / "a.vol4";
    const fs::path p2 = dir / "b.vol4";
    write_volume4d(vol, p1);
    Volume4D back = read_volume4d(p1);
    CHECK(back.t == 4);
    CHECK(back.repetition_time == doctest::Approx(0.72));
    CHECK(back.data == vol.data);
    write_volume4d(back, p2);
    CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("mask survives the round trip") {
    const fs::path dir = temp_dir();
    Volume4D vol = random_volume(3, 2, 2, 2, 5);
    vol.mask.assign(8, 1);
    vol.mask[3] = 0;
    write_volume4d(vol, dir / "m.vol4");
    const Volume4D back = read_volume4d(dir / "m.vol4");
    CHECK(back.mask == vol.mask);
    CHECK_FALSE(back.in_mask(3));
    CHECK(back.in_mask(2));
}

TEST_CASE("truncated payload reports expected vs actual bytes") {
    const fs::path dir = temp_dir();
    Volume4D vol = random_volume(2, 2, 2, 2, 1);
    const fs::path p = dir / "t.vol4";
    write_volume4d(vol, p);
    fs::resize_file(p, 10);
    CHECK_THROWS_WITH_AS(read_volume4d(p), doctest::Contains("expected 64 bytes, got 10"),
                         FormatError);
}

TEST_CASE("header with T=0 is rejected") {
    const fs::path dir = temp_dir();
    Volume4D vol = random_volume(2, 2, 2, 2, 2);
    const fs::path p = dir / "z.vol4";
    write_volume4d(vol, p);
    {
        std::ofstream hdr(p.string() + ".hdr");
        hdr << "vol4 1\ndims 0 2 2 2\ndtype float32\n";
    }
    CHECK_THROWS_AS(read_volume4d(p), FormatError);
}

TEST_CASE("non-finite values are a data error") {
    Volume4D vol = random_volume(2, 2, 2, 2, 3);
    vol.data[5] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(write_volume4d(vol, temp_dir() / "inf.vol4"), DataError);
}

TEST_CASE("network map single-frame files round trip") {
    const fs::path dir = temp_dir();
    NetworkMap map;
    map.d = 3;
    map.h = 2;
    map.w = 2;
    map.label = "target";
    map.values = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    write_network_map(map, dir / "map.vol4");
    const NetworkMap back = read_network_map(dir / "map.vol4");
    CHECK(back.values == map.values);
    CHECK(back.label == "target");
    // a 4-D volume is not a map
    Volume4D vol = random_volume(3, 2, 2, 2, 4);
    write_volume4d(vol, dir / "vol.vol4");
    CHECK_THROWS_AS(read_network_map(dir / "vol.vol4"), FormatError);
}

TEST_CASE("normalize z-scores with the N divisor") {
    Volume4D vol;
    vol.t = 3;
    vol.d = vol.h = 1;
    vol.w = 2;
    vol.data = {1, 5, 2, 5, 3, 5};  // voxel0: 1,2,3; voxel1: constant 5
    const NormalizeResult res = normalize(vol);
    // sigma of {1,2,3} with N divisor = sqrt(2/3)
    const double z = 1.0 / std::sqrt(2.0 / 3.0);
    CHECK(res.volume.data[0] == doctest::Approx(-1.224744871391589).epsilon(1e-12));
    CHECK(res.volume.data[0] == doctest::Approx(-z).epsilon(1e-12));
    CHECK(res.volume.data[2] == doctest::Approx(0.0));
    CHECK(res.volume.data[4] == doctest::Approx(1.224744871391589).epsilon(1e-12));
    // constant voxel got zeroed and flagged
    CHECK(res.volume.data[1] == 0.0);
    CHECK(res.volume.data[3] == 0.0);
    CHECK(res.constant_voxels == std::vector<std::uint8_t>{0, 1});
    CHECK(res.constant_count == 1);
}

TEST_CASE("normalize is idempotent within 1e-12") {
    Volume4D vol = random_volume(16, 4, 4, 4, 77);
    const Volume4D once = normalize(vol).volume;
    const Volume4D twice = normalize(once).volume;
    for (std::size_t i = 0; i < once.data.size(); ++i) {
        CHECK(std::abs(once.data[i] - twice.data[i]) < 1e-12);
    }
}

TEST_CASE("normalize skips out-of-mask voxels") {
    Volume4D vol = random_volume(4, 1, 1, 2, 8);
    vol.mask = {1, 0};
    const Volume4D out = normalize(vol).volume;
    CHECK(out.data[1] == 0.0);
    CHECK(out.data[3] == 0.0);
}

TEST_CASE("noiseless single-network synthesis is rank one") {
    SyntheticSpec spec;
    spec.t = 16;
    spec.d = spec.h = spec.w = 8;
    spec.noise_sigma = 0.0;
    spec.networks = {PlantedNetwork{
        "target", {Blob{4, 4, 4, 2.5}}, {Boxcar{2, 4}, Boxcar{9, 4}}}};
    const SynthesisResult res = synthesize(spec);
    const auto& course = res.courses[0];
    const auto& map = res.maps[0];
    for (std::int64_t v = 0; v < res.volume.frame_size(); ++v) {
        const double m = map.values[static_cast<std::size_t>(v)];
        for (std::int64_t t = 0; t < spec.t; ++t) {
            CHECK(res.volume.data[static_cast<std::size_t>(t * res.volume.frame_size() + v)] ==
                  doctest::Approx(m * course[static_cast<std::size_t>(t)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("synthesis is byte deterministic for a fixed seed") {
    SyntheticSpec spec;
    spec.t = 8;
    spec.d = spec.h = spec.w = 6;
    spec.noise_sigma = 0.3;
    spec.seed = 1234;
    spec.networks = {PlantedNetwork{"n", {Blob{3, 3, 3, 2}}, {Boxcar{1, 3}}}};
    const SynthesisResult a = synthesize(spec);
    const SynthesisResult b = synthesize(spec);
    CHECK(a.volume.data == b.volume.data);
    spec.seed = 1235;
    const SynthesisResult c = synthesize(spec);
    CHECK(a.volume.data != c.volume.data);
}

TEST_CASE("disjoint noiseless networks correlate 1.0 with their own course") {
    SyntheticSpec spec;
    spec.t = 24;
    spec.d = spec.h = spec.w = 10;
    spec.noise_sigma = 0.0;
    spec.networks = {
        PlantedNetwork{"a", {Blob{2.5, 2.5, 2.5, 2}}, {Boxcar{2, 5}, Boxcar{14, 5}}},
        PlantedNetwork{"b", {Blob{7, 7, 7, 2}}, {Boxcar{7, 4}, Boxcar{18, 4}}},
    };
    const SynthesisResult res = synthesize(spec);
    for (std::size_t g = 0; g < 2; ++g) {
        const auto& map = res.maps[g];
        for (std::int64_t v = 0; v < map.numel(); ++v) {
            if (map.values[static_cast<std::size_t>(v)] <= 0.0) {
                continue;
            }
            TimeSeries series(static_cast<std::size_t>(spec.t));
            for (std::int64_t t = 0; t < spec.t; ++t) {
                series[static_cast<std::size_t>(t)] =
                    res.volume.data[static_cast<std::size_t>(t * map.numel() + v)];
            }
            CHECK(pearson(series, res.courses[g]) == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("degenerate dims and escaping blobs are rejected") {
    SyntheticSpec spec;
    spec.t = 1;  // T must be >= 2
    spec.networks = {PlantedNetwork{"n", {Blob{8, 8, 8, 2}}, {Boxcar{0, 1}}}};
    CHECK_THROWS_AS(synthesize(spec), ConfigError);
    spec.t = 8;
    spec.networks[0].blobs[0] = Blob{1, 8, 8, 4};  // support leaves the volume
    CHECK_THROWS_AS(synthesize(spec), ConfigError);
}

TEST_CASE("spec files round trip") {
    const fs::path dir = temp_dir();
    SyntheticSpec spec;
    spec.t = 32;
    spec.d = spec.h = spec.w = 12;
    spec.noise_sigma = 0.15;
    spec.seed = 42;
    spec.networks = {PlantedNetwork{"target", {Blob{6, 6, 6, 3}}, {Boxcar{4, 6}}},
                     PlantedNetwork{"other", {Blob{3, 3, 3, 2}}, {Boxcar{10, 4}}}};
    write_synthetic_spec(spec, dir / "spec.txt");
    const SyntheticSpec back = parse_synthetic_spec(dir / "spec.txt");
    CHECK(back.t == 32);
    CHECK(back.networks.size() == 2);
    CHECK(back.networks[1].label == "other");
    CHECK(back.networks[0].blobs[0].radius == doctest::Approx(3.0));
    const auto a = synthesize(spec);
    const auto b = synthesize(back);
    CHECK(a.volume.data == b.volume.data);
}

TEST_CASE("series csv round trips") {
    const fs::path dir = temp_dir();
    const TimeSeries s1{1.5, -0.25, 3.0};
    const TimeSeries s2{0.0, 11.0, -7.5};
    write_series_csv(dir / "s.csv", {"a", "b"}, {s1, s2});
    std::vector<std::string> names;
    const auto cols = read_series_csv(dir / "s.csv", &names);
    CHECK(names == std::vector<std::string>{"a", "b"});
    CHECK(cols[0] == s1);
    CHECK(cols[1] == s2);
}

}  // TEST_SUITE
