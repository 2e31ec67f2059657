#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pqd/common.hpp"
#include "pqd/random.hpp"

namespace pqd {

/// Sampling grid for synthesized voltage records. The fundamental is fixed at
/// 50 Hz; the default 3200 Hz / 0.2 s grid gives 640 samples over 10 cycles
/// and satisfies Nyquist for oscillatory transients up to 900 Hz.
struct TimeBase {
    double sample_rate = 3200.0;
    double duration = 0.2;
    double fundamental_freq = 50.0;

    std::size_t n_samples() const { return static_cast<std::size_t>(std::llround(sample_rate * duration)); }
    double period() const { return 1.0 / fundamental_freq; }
    double omega() const { return 2.0 * std::numbers::pi * fundamental_freq; }

    void validate() const {
        if (!(sample_rate > 0.0) || !(duration > 0.0) || !(fundamental_freq > 0.0))
            throw std::invalid_argument("TimeBase fields must be positive");
        if (sample_rate <= 2.0 * 900.0)
            throw std::invalid_argument("sample_rate must exceed 1800 Hz (Nyquist for 900 Hz transients)");
        const double cycles = duration * fundamental_freq;
        if (std::abs(cycles - std::round(cycles)) > 1e-9)
            throw std::invalid_argument("duration must be an integer number of fundamental periods");
        if (n_samples() < 2) throw std::invalid_argument("TimeBase yields fewer than 2 samples");
    }
};

/// The 18 disturbance classes: V1-V7 single, V8-V18 mixed.
enum class DisturbanceClass : int {
    V1 = 1,  // harmonics
    V2,      // sag
    V3,      // swell
    V4,      // interruption
    V5,      // flicker
    V6,      // oscillatory transient
    V7,      // impulsive transient
    V8,      // harmonics + sag
    V9,      // harmonics + swell
    V10,     // interruption + harmonics
    V11,     // impulsive transient + sag
    V12,     // impulsive transient + swell
    V13,     // impulsive transient + flicker
    V14,     // impulsive transient + harmonics
    V15,     // harmonics + oscillatory transient + sag
    V16,     // harmonics + oscillatory transient + swell
    V17,     // flicker + impulsive transient + harmonics
    V18,     // harmonics + oscillatory transient + impulsive transient + sag
};

inline constexpr int kNumClasses = 18;

inline std::vector<DisturbanceClass> all_classes() {
    std::vector<DisturbanceClass> out;
    out.reserve(kNumClasses);
    for (int i = 1; i <= kNumClasses; ++i) out.push_back(static_cast<DisturbanceClass>(i));
    return out;
}

inline int class_index(DisturbanceClass c) { return static_cast<int>(c) - 1; }

inline std::string to_string(DisturbanceClass c) { return "V" + std::to_string(static_cast<int>(c)); }

inline DisturbanceClass parse_class(const std::string& name) {
    if (name.size() >= 2 && (name[0] == 'V' || name[0] == 'v')) {
        int num = 0;
        try {
            num = std::stoi(name.substr(1));
        } catch (const std::exception&) {
            num = 0;
        }
        if (num >= 1 && num <= kNumClasses) return static_cast<DisturbanceClass>(num);
    }
    throw std::invalid_argument("unknown disturbance class '" + name + "' (expected V1..V18)");
}

enum class EnvelopeKind { Sag, Swell, Interruption };

inline std::string to_string(EnvelopeKind k) {
    switch (k) {
        case EnvelopeKind::Sag: return "sag";
        case EnvelopeKind::Swell: return "swell";
        case EnvelopeKind::Interruption: return "interruption";
    }
    return "?";
}

/// Which constituent disturbances a class is built from.
struct ClassRecipe {
    bool harmonics = false;
    std::optional<EnvelopeKind> envelope;
    bool flicker = false;
    bool oscillatory = false;
    bool impulsive = false;
};

inline ClassRecipe class_recipe(DisturbanceClass c) {
    using K = EnvelopeKind;
    switch (c) {
        case DisturbanceClass::V1: return {.harmonics = true};
        case DisturbanceClass::V2: return {.envelope = K::Sag};
        case DisturbanceClass::V3: return {.envelope = K::Swell};
        case DisturbanceClass::V4: return {.envelope = K::Interruption};
        case DisturbanceClass::V5: return {.flicker = true};
        case DisturbanceClass::V6: return {.oscillatory = true};
        case DisturbanceClass::V7: return {.impulsive = true};
        case DisturbanceClass::V8: return {.harmonics = true, .envelope = K::Sag};
        case DisturbanceClass::V9: return {.harmonics = true, .envelope = K::Swell};
        case DisturbanceClass::V10: return {.harmonics = true, .envelope = K::Interruption};
        case DisturbanceClass::V11: return {.envelope = K::Sag, .impulsive = true};
        case DisturbanceClass::V12: return {.envelope = K::Swell, .impulsive = true};
        case DisturbanceClass::V13: return {.flicker = true, .impulsive = true};
        case DisturbanceClass::V14: return {.harmonics = true, .impulsive = true};
        case DisturbanceClass::V15: return {.harmonics = true, .envelope = K::Sag, .oscillatory = true};
        case DisturbanceClass::V16: return {.harmonics = true, .envelope = K::Swell, .oscillatory = true};
        case DisturbanceClass::V17: return {.harmonics = true, .flicker = true, .impulsive = true};
        case DisturbanceClass::V18:
            return {.harmonics = true, .envelope = K::Sag, .oscillatory = true, .impulsive = true};
    }
    throw std::invalid_argument("invalid disturbance class");
}

// Parameter ranges for the constituent models. Amplitudes are per-unit,
// angles radians, times seconds, frequencies Hz.
struct HarmonicParams {
    double a3 = 0.0, a5 = 0.0, a7 = 0.0; // in [0, 0.15]
    double phi3 = 0.0, phi5 = 0.0, phi7 = 0.0; // in [0, 2 pi)
};

struct EnvelopeEvent {
    EnvelopeKind kind = EnvelopeKind::Sag;
    double alpha = 0.0; // sag/swell in [0.1, 0.9]; interruption in [0.9, 1.0]
    double t1 = 0.0, t2 = 0.0; // event window, duration 4T..9T
};

struct FlickerParams {
    double alpha_f = 0.0; // in [0.3, 0.5]
    double beta = 0.0; // modulation frequency ratio, in [0.1, 0.4]
};

struct OscillatoryTransient {
    double alpha2 = 0.0; // in [0.1, 0.8]
    double tau = 0.0; // decay constant, in [0.008, 0.04] s
    double t3 = 0.0, t4 = 0.0; // window, duration 0.05T..3T
    double f_n = 0.0; // ringing frequency, in [300, 900] Hz
};

struct ImpulsiveTransient {
    double alpha2 = 0.0; // in [1, 10]
    double tau = 0.0; // in [0.008, 0.04] s
    double t3 = 0.0, t4 = 0.0; // window, duration 0.05T..3T
};

/// Parameter record for one synthesized waveform; only the components named
/// by the class recipe are present.
struct DisturbanceParams {
    std::optional<HarmonicParams> harmonic;
    std::optional<EnvelopeEvent> envelope;
    std::optional<FlickerParams> flicker;
    std::optional<OscillatoryTransient> oscillatory;
    std::optional<ImpulsiveTransient> impulsive;

    void validate(const TimeBase& tb) const {
        auto in = [](double x, double lo, double hi) { return x >= lo && x <= hi; };
        if (harmonic) {
            const auto& h = *harmonic;
            if (!in(h.a3, 0.0, 0.15) || !in(h.a5, 0.0, 0.15) || !in(h.a7, 0.0, 0.15))
                throw std::invalid_argument("harmonic amplitude outside [0, 0.15]");
            const double two_pi = 2.0 * std::numbers::pi;
            if (!in(h.phi3, 0.0, two_pi) || !in(h.phi5, 0.0, two_pi) || !in(h.phi7, 0.0, two_pi))
                throw std::invalid_argument("harmonic phase outside [0, 2 pi]");
        }
        if (envelope) {
            const auto& e = *envelope;
            const bool depth_ok = e.kind == EnvelopeKind::Interruption ? in(e.alpha, 0.9, 1.0)
                                                                       : in(e.alpha, 0.1, 0.9);
            if (!depth_ok) throw std::invalid_argument("envelope depth outside its range");
            if (!(0.0 <= e.t1 && e.t1 < e.t2 && e.t2 <= tb.duration))
                throw std::invalid_argument("envelope window must satisfy 0 <= t1 < t2 <= duration");
            const double d = e.t2 - e.t1;
            if (d < 4.0 * tb.period() - 1e-12 || d > 9.0 * tb.period() + 1e-12)
                throw std::invalid_argument("envelope duration outside [4T, 9T]");
        }
        if (flicker) {
            if (!in(flicker->alpha_f, 0.3, 0.5) || !in(flicker->beta, 0.1, 0.4))
                throw std::invalid_argument("flicker parameters outside their ranges");
        }
        auto check_transient = [&](double a2, double lo, double hi, double tau, double t3, double t4) {
            if (!in(a2, lo, hi)) throw std::invalid_argument("transient amplitude outside its range");
            if (!in(tau, 0.008, 0.04)) throw std::invalid_argument("transient tau outside [0.008, 0.04]");
            if (!(0.0 <= t3 && t3 < t4 && t4 <= tb.duration))
                throw std::invalid_argument("transient window must satisfy 0 <= t3 < t4 <= duration");
            const double d = t4 - t3;
            if (d < 0.05 * tb.period() - 1e-12 || d > 3.0 * tb.period() + 1e-12)
                throw std::invalid_argument("transient duration outside [0.05T, 3T]");
        };
        if (oscillatory) {
            const auto& o = *oscillatory;
            check_transient(o.alpha2, 0.1, 0.8, o.tau, o.t3, o.t4);
            if (!in(o.f_n, 300.0, 900.0))
                throw std::invalid_argument("oscillation frequency outside [300, 900] Hz");
        }
        if (impulsive) {
            const auto& p = *impulsive;
            check_transient(p.alpha2, 1.0, 10.0, p.tau, p.t3, p.t4);
        }
    }

    void validate_for(DisturbanceClass cls, const TimeBase& tb) const {
        const ClassRecipe r = class_recipe(cls);
        if (r.harmonics != harmonic.has_value() || r.flicker != flicker.has_value() ||
            r.oscillatory != oscillatory.has_value() || r.impulsive != impulsive.has_value() ||
            r.envelope.has_value() != envelope.has_value() ||
            (r.envelope && envelope && *r.envelope != envelope->kind))
            throw std::invalid_argument("parameter components do not match the class recipe for " +
                                        to_string(cls));
        validate(tb);
    }
};

/// A sampled per-unit voltage record with its provenance.
struct Waveform {
    std::vector<double> samples;
    TimeBase timebase;
    DisturbanceClass label = DisturbanceClass::V1;
    DisturbanceParams params;
    std::optional<double> snr_db; // absent for noiseless records
};

namespace detail {

// Heaviside step with u(0) = 1; the window u(t-a) - u(t-b) is live on [a, b).
inline double step_window(double t, double a, double b) { return (t >= a && t < b) ? 1.0 : 0.0; }

// Places an event of length d so it never touches the first or last cycle.
inline std::pair<double, double> place_event(RandomStream& rng, const TimeBase& tb, double min_len,
                                             double max_len) {
    const double guard = tb.period();
    const double available = tb.duration - 2.0 * guard;
    const double hi = std::min(max_len, available);
    if (hi < min_len)
        throw std::invalid_argument("record too short to place an event of the required length");
    const double d = rng.uniform(min_len, hi);
    const double start = rng.uniform(guard, tb.duration - guard - d);
    return {start, start + d};
}

} // namespace detail

/// Draws one parameter set for the class, every field uniform over its range.
/// Event windows are placed wholly inside [T, duration - T]; a window cap at
/// duration - 2T applies when the nominal upper bound (9T) does not fit.
inline DisturbanceParams sample_params(DisturbanceClass cls, RandomStream& rng,
                                       const TimeBase& tb = {}) {
    tb.validate();
    const ClassRecipe recipe = class_recipe(cls);
    const double period = tb.period();
    DisturbanceParams p;
    if (recipe.harmonics) {
        HarmonicParams h;
        h.a3 = rng.uniform(0.0, 0.15);
        h.a5 = rng.uniform(0.0, 0.15);
        h.a7 = rng.uniform(0.0, 0.15);
        const double two_pi = 2.0 * std::numbers::pi;
        h.phi3 = rng.uniform(0.0, two_pi);
        h.phi5 = rng.uniform(0.0, two_pi);
        h.phi7 = rng.uniform(0.0, two_pi);
        p.harmonic = h;
    }
    if (recipe.envelope) {
        EnvelopeEvent e;
        e.kind = *recipe.envelope;
        e.alpha = e.kind == EnvelopeKind::Interruption ? rng.uniform(0.9, 1.0)
                                                       : rng.uniform(0.1, 0.9);
        auto [t1, t2] = detail::place_event(rng, tb, 4.0 * period, 9.0 * period);
        e.t1 = t1;
        e.t2 = t2;
        p.envelope = e;
    }
    if (recipe.flicker) {
        p.flicker = FlickerParams{rng.uniform(0.3, 0.5), rng.uniform(0.1, 0.4)};
    }
    if (recipe.oscillatory) {
        OscillatoryTransient o;
        o.alpha2 = rng.uniform(0.1, 0.8);
        o.tau = rng.uniform(0.008, 0.04);
        auto [t3, t4] = detail::place_event(rng, tb, 0.05 * period, 3.0 * period);
        o.t3 = t3;
        o.t4 = t4;
        o.f_n = rng.uniform(300.0, 900.0);
        p.oscillatory = o;
    }
    if (recipe.impulsive) {
        ImpulsiveTransient it;
        it.alpha2 = rng.uniform(1.0, 10.0);
        it.tau = rng.uniform(0.008, 0.04);
        auto [t3, t4] = detail::place_event(rng, tb, 0.05 * period, 3.0 * period);
        it.t3 = t3;
        it.t4 = t4;
        p.impulsive = it;
    }
    return p;
}

/// Evaluates the disturbance model at time t. Multiplicative envelopes
/// (sag/swell/interruption, flicker) scale the carrier (fundamental plus
/// harmonics); transient terms are added afterwards, so each single-class
/// model is a special case of the composition.
inline double eval_model(const DisturbanceParams& p, const TimeBase& tb, double t) {
    const double w = tb.omega();
    double carrier = std::sin(w * t);
    if (p.harmonic) {
        const auto& h = *p.harmonic;
        carrier += h.a3 * std::sin(3.0 * w * t + h.phi3) + h.a5 * std::sin(5.0 * w * t + h.phi5) +
                   h.a7 * std::sin(7.0 * w * t + h.phi7);
    }
    double envelope = 1.0;
    if (p.envelope) {
        const auto& e = *p.envelope;
        const double win = detail::step_window(t, e.t1, e.t2);
        envelope *= e.kind == EnvelopeKind::Swell ? 1.0 + e.alpha * win : 1.0 - e.alpha * win;
    }
    if (p.flicker) {
        envelope *= 1.0 + p.flicker->alpha_f * std::sin(p.flicker->beta * w * t);
    }
    double value = envelope * carrier;
    if (p.oscillatory) {
        const auto& o = *p.oscillatory;
        if (detail::step_window(t, o.t3, o.t4) != 0.0) {
            const double wn = 2.0 * std::numbers::pi * o.f_n;
            value += o.alpha2 * std::exp(-(t - o.t3) / o.tau) * std::sin(wn * (t - o.t3));
        }
    }
    if (p.impulsive) {
        const auto& it = *p.impulsive;
        if (detail::step_window(t, it.t3, it.t4) != 0.0)
            value += it.alpha2 * std::exp(-(t - it.t3) / it.tau);
    }
    return value;
}

/// Samples the class model onto the time grid: samples[k] = V(k / sample_rate).
inline Waveform synthesize(DisturbanceClass cls, const DisturbanceParams& params,
                           const TimeBase& tb = {}) {
    tb.validate();
    params.validate_for(cls, tb);
    Waveform w;
    w.timebase = tb;
    w.label = cls;
    w.params = params;
    w.samples.resize(tb.n_samples());
    for (std::size_t k = 0; k < w.samples.size(); ++k)
        w.samples[k] = eval_model(params, tb, static_cast<double>(k) / tb.sample_rate);
    return w;
}

/// Noise variance that realizes the requested SNR against the mean signal power.
inline double awgn_noise_variance(std::span<const double> samples, double snr_db) {
    double power = 0.0;
    for (double s : samples) power += s * s;
    power /= static_cast<double>(samples.size());
    return power / std::pow(10.0, snr_db / 10.0);
}

/// Returns a copy of w with zero-mean white Gaussian noise calibrated to
/// snr_db. The input must be noiseless and is left untouched.
inline Waveform add_awgn(const Waveform& w, double snr_db, RandomStream& rng) {
    if (w.snr_db.has_value()) throw std::invalid_argument("add_awgn input already carries noise");
    if (std::isnan(snr_db)) throw std::invalid_argument("snr_db must not be NaN");
    Waveform noisy = w;
    const double sigma = std::sqrt(awgn_noise_variance(w.samples, snr_db));
    for (double& s : noisy.samples) s += rng.normal(0.0, sigma);
    noisy.snr_db = snr_db;
    return noisy;
}

/// Measured SNR in dB: 10 log10(sum clean^2 / sum (noisy - clean)^2).
/// Returns +infinity when the residual is exactly zero.
inline double measure_snr(const Waveform& clean, const Waveform& noisy) {
    if (clean.samples.size() != noisy.samples.size())
        throw std::invalid_argument("measure_snr requires equal-length waveforms");
    double signal = 0.0, residual = 0.0;
    for (std::size_t i = 0; i < clean.samples.size(); ++i) {
        signal += clean.samples[i] * clean.samples[i];
        const double d = noisy.samples[i] - clean.samples[i];
        residual += d * d;
    }
    if (residual == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(signal / residual);
}

/// Generates per_class waveforms for each requested class, optionally noisy.
/// Each sample derives its own seed from (master_seed, class, index), so the
/// result is independent of generation order and a clean/noisy pair produced
/// from the same master seed shares parameters.
inline std::vector<Waveform> generate_dataset(const std::vector<DisturbanceClass>& classes,
                                              std::size_t per_class,
                                              std::optional<double> snr_db, const TimeBase& tb,
                                              std::uint64_t master_seed) {
    if (per_class < 1) throw std::invalid_argument("per_class must be >= 1");
    tb.validate();
    std::vector<Waveform> out(classes.size() * per_class);
    parallel_for(out.size(), [&](std::size_t task) {
        const DisturbanceClass cls = classes[task / per_class];
        const std::size_t index = task % per_class;
        const auto ci = static_cast<std::uint64_t>(class_index(cls));
        RandomStream param_rng(derive_seed(master_seed, {ci, index, 0}));
        const DisturbanceParams params = sample_params(cls, param_rng, tb);
        Waveform w = synthesize(cls, params, tb);
        if (snr_db) {
            RandomStream noise_rng(
                derive_seed(master_seed, {ci, index, 1, std::bit_cast<std::uint64_t>(*snr_db)}));
            w = add_awgn(w, *snr_db, noise_rng);
        }
        out[task] = std::move(w);
    }, 8);
    return out;
}

} // namespace pqd
