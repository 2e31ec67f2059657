#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pqd/image.hpp"
#include "pqd/image_dataset.hpp"
#include "pqd/png_io.hpp"
#include "pqd/random.hpp"
#include "pqd/signal.hpp"

namespace {

namespace fs = std::filesystem;
using namespace pqd;

fs::path temp_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("pqd_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

TEST(Normalize, MapsRangeToUnitInterval) {
    Matrix m(1, 3);
    m.v = {2.0, 4.0, 6.0};
    const Matrix out = normalize_minmax(m);
    EXPECT_DOUBLE_EQ(out.v[0], 0.0);
    EXPECT_DOUBLE_EQ(out.v[1], 0.5);
    EXPECT_DOUBLE_EQ(out.v[2], 1.0);
}

TEST(Normalize, ConstantMatrixGoesToZero) {
    Matrix m(3, 3, 7.0);
    const Matrix out = normalize_minmax(m);
    for (double v : out.v) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Normalize, ExtremesBecomeZeroAndOne) {
    RandomStream rng(12);
    Matrix m(8, 8);
    for (double& v : m.v) v = rng.uniform(-5.0, 9.0);
    const Matrix out = normalize_minmax(m);
    EXPECT_DOUBLE_EQ(*std::min_element(out.v.begin(), out.v.end()), 0.0);
    EXPECT_DOUBLE_EQ(*std::max_element(out.v.begin(), out.v.end()), 1.0);
}

TEST(Normalize, RejectsNonFinite) {
    Matrix m(1, 2);
    m.v = {1.0, std::nan("")};
    EXPECT_THROW(normalize_minmax(m), std::invalid_argument);
}

TEST(Jet, MatchesClampFormulaEverywhere) {
    for (int i = 0; i <= 1000; ++i) {
        const double v = static_cast<double>(i) / 1000.0;
        const auto c = jet_colormap(v);
        const double r = std::clamp(1.5 - std::abs(4.0 * v - 3.0), 0.0, 1.0);
        const double g = std::clamp(1.5 - std::abs(4.0 * v - 2.0), 0.0, 1.0);
        const double b = std::clamp(1.5 - std::abs(4.0 * v - 1.0), 0.0, 1.0);
        ASSERT_EQ(c[0], r) << v;
        ASSERT_EQ(c[1], g) << v;
        ASSERT_EQ(c[2], b) << v;
        const auto bytes = jet_rgb8(v);
        ASSERT_EQ(bytes[0], static_cast<std::uint8_t>(std::lround(255.0 * r)));
        ASSERT_EQ(bytes[1], static_cast<std::uint8_t>(std::lround(255.0 * g)));
        ASSERT_EQ(bytes[2], static_cast<std::uint8_t>(std::lround(255.0 * b)));
    }
}

TEST(Jet, Endpoints) {
    auto lo = jet_colormap(0.0);
    EXPECT_DOUBLE_EQ(lo[0], 0.0);
    EXPECT_DOUBLE_EQ(lo[1], 0.0);
    EXPECT_DOUBLE_EQ(lo[2], 0.5);
    auto hi = jet_colormap(1.0);
    EXPECT_DOUBLE_EQ(hi[0], 0.5);
    EXPECT_DOUBLE_EQ(hi[1], 0.0);
    EXPECT_DOUBLE_EQ(hi[2], 0.0);
    auto mid = jet_colormap(0.5);
    EXPECT_DOUBLE_EQ(mid[0], 0.5);
    EXPECT_DOUBLE_EQ(mid[1], 1.0);
    EXPECT_DOUBLE_EQ(mid[2], 0.5);
}

TEST(Jet, SaturatesOutOfRange) {
    EXPECT_EQ(jet_colormap(-0.3), jet_colormap(0.0));
    EXPECT_EQ(jet_colormap(1.7), jet_colormap(1.0));
}

TEST(Resize, IdentityIsExact) {
    RandomStream rng(4);
    Matrix m(13, 17);
    for (double& v : m.v) v = rng.uniform(-2.0, 2.0);
    const Matrix out = resize_bilinear(m, 13, 17);
    EXPECT_EQ(out.v, m.v);
}

TEST(Resize, ConstantStaysConstant) {
    Matrix m(5, 7, 3.25);
    const Matrix out = resize_bilinear(m, 11, 3);
    for (double v : out.v) EXPECT_DOUBLE_EQ(v, 3.25);
}

TEST(Resize, CornerAlignedUpsample) {
    Matrix m(2, 1);
    m.v = {0.0, 1.0};
    const Matrix out = resize_bilinear(m, 3, 1);
    ASSERT_EQ(out.rows, 3u);
    EXPECT_DOUBLE_EQ(out.v[0], 0.0);
    EXPECT_DOUBLE_EQ(out.v[1], 0.5);
    EXPECT_DOUBLE_EQ(out.v[2], 1.0);
}

TEST(Resize, RgbIdentityIsExact) {
    RandomStream rng(9);
    RGBImage img(6, 5);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_index(256));
    EXPECT_EQ(resize_bilinear(img, 6, 5), img);
}

TEST(Render, ZeroAmplitudeIsSolidDarkBlue) {
    Matrix amp(9, 33, 0.0);
    const RGBImage img = render_spectrogram(amp, 16);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        ASSERT_EQ(img.pixels[i + 0], 0);
        ASSERT_EQ(img.pixels[i + 1], 0);
        ASSERT_EQ(img.pixels[i + 2], 128);
    }
}

TEST(Render, FrequencyAxisAscendsBottomToTop) {
    // Only the highest-frequency row is hot; it must land at the image top.
    Matrix amp(16, 16, 0.0);
    for (std::size_t c = 0; c < amp.cols; ++c) amp.at(amp.rows - 1, c) = 1.0;
    const RGBImage img = render_spectrogram(amp, 16);
    const auto hot = jet_rgb8(1.0);
    const auto cold = jet_rgb8(0.0);
    for (std::size_t c = 0; c < 16; ++c) {
        ASSERT_EQ(img.px(0, c)[0], hot[0]);
        ASSERT_EQ(img.px(15, c)[0], cold[0]);
        ASSERT_EQ(img.px(15, c)[2], cold[2]);
    }
}

TEST(Render, SupportsPaperAndDeskSizes) {
    Matrix amp(33, 64);
    RandomStream rng(2);
    for (double& v : amp.v) v = rng.uniform01();
    const RGBImage desk = render_spectrogram(amp, 64);
    EXPECT_EQ(desk.height, 64u);
    EXPECT_EQ(desk.width, 64u);
    const RGBImage paper = render_spectrogram(amp, 240);
    EXPECT_EQ(paper.height, 240u);
    EXPECT_EQ(paper.width, 240u);
}

TEST(Png, RoundTripIsLossless) {
    const fs::path dir = temp_dir("png");
    RandomStream rng(31);
    RGBImage img(48, 37);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_index(256));
    const std::string path = (dir / "round_trip.png").string();
    write_png(path, img);
    EXPECT_EQ(read_png(path), img);
    fs::remove_all(dir);
}

TEST(Png, ReadRejectsGarbage) {
    const fs::path dir = temp_dir("png_bad");
    const std::string path = (dir / "not_a_png.png").string();
    std::ofstream(path) << "hello";
    EXPECT_THROW(read_png(path), std::runtime_error);
    EXPECT_THROW(read_png((dir / "missing.png").string()), std::runtime_error);
    fs::remove_all(dir);
}

TEST(Dataset, LayoutManifestAndDeterminism) {
    const fs::path dir = temp_dir("dataset");
    const TimeBase tb;
    const auto waves = generate_dataset({DisturbanceClass::V1, DisturbanceClass::V13}, 2,
                                        std::nullopt, tb, 21);
    const DatasetManifest manifest = build_image_dataset(waves, (dir / "a").string(), 32);

    ASSERT_EQ(manifest.entries.size(), 4u);
    EXPECT_EQ(manifest.class_list.size(), 18u);
    EXPECT_EQ(manifest.entries[0].image_path, "V1/V1_0.png");
    EXPECT_EQ(manifest.entries[3].image_path, "V13/V13_1.png");
    for (const auto& e : manifest.entries)
        EXPECT_TRUE(fs::exists(dir / "a" / e.image_path)) << e.image_path;

    const DatasetManifest reloaded = load_manifest((dir / "a" / "manifest.jsonl").string());
    EXPECT_EQ(reloaded, manifest);

    // Rerun into a second directory: identical manifest and identical bytes.
    const DatasetManifest again = build_image_dataset(waves, (dir / "b").string(), 32);
    EXPECT_EQ(again, manifest);
    for (const auto& e : manifest.entries) {
        std::ifstream fa(dir / "a" / e.image_path, std::ios::binary);
        std::ifstream fb(dir / "b" / e.image_path, std::ios::binary);
        const std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
        const std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
        EXPECT_EQ(ba, bb);
        EXPECT_FALSE(ba.empty());
    }
    fs::remove_all(dir);
}

TEST(Dataset, EmptyInputGivesEmptyManifest) {
    const fs::path dir = temp_dir("dataset_empty");
    const DatasetManifest manifest = build_image_dataset({}, (dir / "out").string(), 32);
    EXPECT_TRUE(manifest.entries.empty());
    EXPECT_FALSE(fs::exists(dir / "out" / "manifest.jsonl"));
    fs::remove_all(dir);
}

TEST(Dataset, LogCompressionIsScaleInvariant) {
    RandomStream rng(8);
    Matrix a(16, 24);
    for (double& v : a.v) v = rng.uniform(0.0, 3.0);
    Matrix scaled = a;
    for (double& v : scaled.v) v *= 137.5;
    const Matrix ca = log_compress(a);
    const Matrix cs = log_compress(scaled);
    for (std::size_t i = 0; i < ca.v.size(); ++i) EXPECT_NEAR(ca.v[i], cs.v[i], 1e-12);

    const Matrix zeros = log_compress(Matrix(4, 4, 0.0));
    for (double v : zeros.v) EXPECT_DOUBLE_EQ(v, 0.0);

    // 60 dB floor: peak maps to ~0, true zeros to log10(floor).
    Matrix two(1, 2);
    two.v = {0.0, 5.0};
    const Matrix c2 = log_compress(two);
    EXPECT_DOUBLE_EQ(c2.v[0], -3.0);
    EXPECT_NEAR(c2.v[1], 0.0, 1e-3);
}

TEST(Dataset, SpectrogramImageIsSquareAndVaried) {
    const TimeBase tb;
    RandomStream rng(3);
    const auto params = sample_params(DisturbanceClass::V6, rng, tb);
    const Waveform w = synthesize(DisturbanceClass::V6, params, tb);
    const RGBImage img = spectrogram_image(w, 64);
    EXPECT_EQ(img.height, 64u);
    EXPECT_EQ(img.width, 64u);
    // A real disturbance spectrogram is not a flat color.
    bool varied = false;
    for (std::size_t i = 3; i < img.pixels.size(); ++i)
        if (img.pixels[i] != img.pixels[i % 3]) varied = true;
    EXPECT_TRUE(varied);
}

TEST(WaveformIo, SaveLoadRoundTrip) {
    const fs::path dir = temp_dir("waveio");
    const TimeBase tb;
    const auto waves = generate_dataset({DisturbanceClass::V2, DisturbanceClass::V6}, 3, 25.0, tb, 8);
    save_waveforms(waves, dir.string());
    const auto [loaded, ids] = load_waveforms(dir.string());
    ASSERT_EQ(loaded.size(), waves.size());
    EXPECT_EQ(ids[0], "V2_00000");
    EXPECT_EQ(ids[5], "V6_00002");
    for (std::size_t i = 0; i < waves.size(); ++i) {
        ASSERT_EQ(loaded[i].samples, waves[i].samples) << i;
        EXPECT_EQ(loaded[i].label, waves[i].label);
        ASSERT_TRUE(loaded[i].snr_db.has_value());
        EXPECT_DOUBLE_EQ(*loaded[i].snr_db, 25.0);
        EXPECT_DOUBLE_EQ(loaded[i].timebase.sample_rate, waves[i].timebase.sample_rate);
    }
    // Parameters survive the JSON round trip bit-exactly.
    ASSERT_TRUE(loaded[0].params.envelope.has_value());
    EXPECT_EQ(loaded[0].params.envelope->alpha, waves[0].params.envelope->alpha);
    EXPECT_EQ(loaded[3].params.oscillatory->f_n, waves[3].params.oscillatory->f_n);
    fs::remove_all(dir);
}

} // namespace
