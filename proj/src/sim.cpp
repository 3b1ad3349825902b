#include "dgfd/sim.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <vector>

#include "dgfd/common.hpp"

namespace dgfd {

namespace {

constexpr int kHarmonics = 3;
constexpr double kHarmonicAmp[kHarmonics] = {1.0, 0.45, 0.22};
constexpr double kTorqueRef = 20.0;  // amplitudes are calibrated at this load
constexpr double kBurstFreq = 3000.0;
constexpr double kBurstTau = 0.0015;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Fixed transfer function of the housing between gear mesh and sensors. Its
// peak makes the *relative* harmonic amplitudes a function of speed, which is
// what gives speed changes more leverage on the feature distribution than
// torque changes (torque only scales). One broad peak keeps the gain of each
// harmonic monotone over 1000..2000 rpm, so an intermediate speed produces an
// intermediate spectral pattern rather than one outside the operating range.
double resonance(double f) {
    double a = (f - 2300.0) / 800.0;
    return 1.0 + 1.2 * std::exp(-a * a);
}

}  // namespace

void to_json(nlohmann::json& j, const ConditionSpec& c) {
    j = nlohmann::json{{"speed_rpm", c.speed_rpm}, {"torque_nm", c.torque_nm}};
}

void from_json(const nlohmann::json& j, ConditionSpec& c) {
    c.speed_rpm = j.value("speed_rpm", c.speed_rpm);
    c.torque_nm = j.value("torque_nm", c.torque_nm);
}

void to_json(nlohmann::json& j, const SimConfig& cfg) {
    j = nlohmann::json{{"teeth_count", cfg.teeth_count},
                       {"base_amplitude", cfg.base_amplitude},
                       {"noise_std", cfg.noise_std},
                       {"wear_harmonic_gain", cfg.wear_harmonic_gain},
                       {"break_impulse_amplitude", cfg.break_impulse_amplitude},
                       {"crack_modulation_depth", cfg.crack_modulation_depth},
                       {"speed_wander", cfg.speed_wander},
                       {"amp_jitter", cfg.amp_jitter},
                       {"level_drift", cfg.level_drift},
                       {"rig_seed", cfg.rig_seed},
                       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, SimConfig& cfg) {
    cfg.teeth_count = j.value("teeth_count", cfg.teeth_count);
    cfg.base_amplitude = j.value("base_amplitude", cfg.base_amplitude);
    cfg.noise_std = j.value("noise_std", cfg.noise_std);
    cfg.wear_harmonic_gain = j.value("wear_harmonic_gain", cfg.wear_harmonic_gain);
    cfg.break_impulse_amplitude = j.value("break_impulse_amplitude", cfg.break_impulse_amplitude);
    cfg.crack_modulation_depth = j.value("crack_modulation_depth", cfg.crack_modulation_depth);
    cfg.speed_wander = j.value("speed_wander", cfg.speed_wander);
    cfg.amp_jitter = j.value("amp_jitter", cfg.amp_jitter);
    cfg.level_drift = j.value("level_drift", cfg.level_drift);
    cfg.rig_seed = j.value("rig_seed", cfg.rig_seed);
    cfg.seed = j.value("seed", cfg.seed);
}

const char* fault_name(FaultClass f) {
    switch (f) {
        case FaultClass::Healthy: return "healthy";
        case FaultClass::GearWear: return "wear";
        case FaultClass::TeethBreak: return "break";
        case FaultClass::TeethCrack: return "crack";
    }
    fail("fault_name: bad enum value");
}

FaultClass fault_from_name(const std::string& name) {
    if (name == "healthy") return FaultClass::Healthy;
    if (name == "wear") return FaultClass::GearWear;
    if (name == "break") return FaultClass::TeethBreak;
    if (name == "crack") return FaultClass::TeethCrack;
    throw std::invalid_argument(cat("unknown fault class '", name, "' (want healthy|wear|break|crack)"));
}

MultichannelSignal synth_signal(const ConditionSpec& cond, FaultClass fault, double duration_s,
                                const SimConfig& cfg) {
    check(cond.speed_rpm > 0.0 && cond.torque_nm > 0.0, "synth_signal: speed and torque must be positive");
    check(duration_s > 0.0, "synth_signal: duration must be positive");
    check(cfg.teeth_count >= 2, "synth_signal: teeth_count must be >= 2");
    check(cfg.noise_std >= 0.0, "synth_signal: noise_std must be >= 0");
    check(cfg.speed_wander >= 0.0 && cfg.speed_wander < 1.0, "synth_signal: speed_wander must be in [0,1)");
    check(cfg.amp_jitter >= 0.0 && cfg.amp_jitter < 1.0, "synth_signal: amp_jitter must be in [0,1)");
    check(cfg.level_drift >= 0.0 && cfg.level_drift < 1.0, "synth_signal: level_drift must be in [0,1)");

    const double fs = kMcc5SampleRateHz;
    const size_t L = static_cast<size_t>(std::llround(duration_s * fs));
    check(L >= 1, "synth_signal: duration too short for one sample");

    const double torque_gain = cond.torque_nm / kTorqueRef;

    // Sensor mixing and the phase offsets of each harmonic along its
    // transmission path are set by the rig's geometry, so they stay put across
    // every recording of one experiment. What a recording cannot control is
    // where the shaft happens to be when capture starts: that is a single time
    // offset t0 shifting every periodic component coherently, plus fresh noise.
    std::mt19937_64 rig(cfg.rig_seed);
    std::mt19937_64 rec(derive_seed(cfg.seed, "sim.phase"));
    std::uniform_real_distribution<double> uphase(0.0, kTwoPi);
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    double mix[kVibrationChannels][2];
    for (size_t c = 0; c < kVibrationChannels; ++c)
        for (int s = 0; s < 2; ++s) {
            double gain = 0.3 + 0.7 * u01(rig);
            mix[c][s] = (u01(rig) < 0.5 ? -gain : gain);
        }

    double phase[2][kHarmonics];
    double burst_phase[2];
    double mod_phase[2];
    for (int s = 0; s < 2; ++s) {
        for (int h = 0; h < kHarmonics; ++h) phase[s][h] = uphase(rig);
        burst_phase[s] = uphase(rig);
        mod_phase[s] = uphase(rig);
    }

    // What else a recording cannot pin down: the controller holds the
    // commanded speed only approximately, and the effective harmonic
    // amplitudes drift with load zone and lubrication.
    const double u_start = u01(rec);
    const double kappa = 1.0 + cfg.speed_wander * (2.0 * u01(rec) - 1.0);
    double drift[kHarmonics];
    for (int h = 0; h < kHarmonics; ++h) drift[h] = 1.0 + cfg.amp_jitter * (2.0 * u01(rec) - 1.0);
    // impact severity varies far more than steady meshing: backlash and load
    // zone gate how hard a broken tooth lands
    const double burst_drift = 1.0 + 2.0 * cfg.amp_jitter * (2.0 * u01(rec) - 1.0);
    // overall excitation also drifts recording to recording (lubrication film,
    // load zone, mount coupling); noise floor is electronic and does not follow
    const double level = 1.0 + cfg.level_drift * (2.0 * u01(rec) - 1.0);

    const double f_r = cond.speed_rpm / 60.0 * kappa;
    const double f_m = f_r * cfg.teeth_count;
    const double t0 = u_start / f_r;  // start angle, in seconds of shaft travel

    // per-harmonic source amplitudes after load scaling, resonance, and wear
    double amp[2][kHarmonics];
    for (int s = 0; s < 2; ++s)
        for (int h = 0; h < kHarmonics; ++h) {
            double a = kHarmonicAmp[h] * drift[h] * cfg.base_amplitude * level * torque_gain * resonance((h + 1) * f_m);
            if (fault == FaultClass::GearWear && h >= 1) a *= 1.0 + cfg.wear_harmonic_gain;
            amp[s][h] = a;
        }

    std::vector<double> src(2 * L, 0.0);
    for (int s = 0; s < 2; ++s) {
        double* w = src.data() + static_cast<size_t>(s) * L;
        for (size_t t = 0; t < L; ++t) {
            double ts = static_cast<double>(t) / fs + t0;
            double mesh = 0.0;
            for (int h = 0; h < kHarmonics; ++h) mesh += amp[s][h] * std::sin(kTwoPi * (h + 1) * f_m * ts + phase[s][h]);
            if (fault == FaultClass::TeethCrack)
                mesh *= 1.0 + cfg.crack_modulation_depth * std::cos(kTwoPi * f_r * ts + mod_phase[s]);
            w[t] = mesh;
        }
        if (fault == FaultClass::TeethBreak) {
            // one impact per revolution; the shaft passes the broken tooth at
            // integer angles, i.e. at times (k - f_r*t0) / f_r
            double peak = cfg.break_impulse_amplitude * burst_drift * cfg.base_amplitude * level * torque_gain;
            size_t burst_len = static_cast<size_t>(std::ceil(6.0 * kBurstTau * fs));
            double frac = f_r * t0 - std::floor(f_r * t0);
            for (long k = 0;; ++k) {
                double tk = (static_cast<double>(k) - frac) / f_r;  // k=0 may be a tail from before t=0
                long start = std::llround(tk * fs);
                if (start >= static_cast<long>(L)) break;
                size_t j0 = start < 0 ? static_cast<size_t>(-start) : 0;
                for (size_t j = j0; j < burst_len && start + static_cast<long>(j) < static_cast<long>(L); ++j) {
                    double dt = static_cast<double>(j) / fs;
                    w[start + static_cast<long>(j)] +=
                        peak * std::exp(-dt / kBurstTau) * std::sin(kTwoPi * kBurstFreq * dt + burst_phase[s]);
                }
            }
        }
    }

    std::mt19937_64 noise_rng(derive_seed(cfg.seed, "sim.noise"));
    std::normal_distribution<double> gauss(0.0, 1.0);

    MultichannelSignal out;
    out.sample_rate_hz = fs;
    out.samples = Tensor({kVibrationChannels, L});
    for (size_t c = 0; c < kVibrationChannels; ++c) {
        out.channel_names.push_back(cat("vib", c < 3 ? 1 : 2, "_", "xyz"[c % 3]));
        double* dst = &out.samples(c, 0);
        const double* s0 = src.data();
        const double* s1 = src.data() + L;
        double m0 = mix[c][0], m1 = mix[c][1];
        for (size_t t = 0; t < L; ++t) dst[t] = m0 * s0[t] + m1 * s1[t] + cfg.noise_std * gauss(noise_rng);
    }
    return out;
}

void write_mcc5_csv(const MultichannelSignal& vib, const ConditionSpec& cond, const std::string& path) {
    check(vib.channels() == kVibrationChannels,
          cat("write_mcc5_csv: want ", kVibrationChannels, " channels, got ", vib.channels()));
    std::ofstream out(path);
    if (!out) fail(cat("cannot write ", path));
    out << "speed,load";
    for (const auto& n : vib.channel_names) out << ',' << n;
    out << '\n';
    size_t L = vib.length();
    char buf[32];
    std::string line;
    for (size_t t = 0; t < L; ++t) {
        line.clear();
        std::snprintf(buf, sizeof buf, "%.17g", cond.speed_rpm);
        line += buf;
        line += ',';
        std::snprintf(buf, sizeof buf, "%.17g", cond.torque_nm);
        line += buf;
        for (size_t c = 0; c < kVibrationChannels; ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", vib.samples(c, t));
            line += ',';
            line += buf;
        }
        line += '\n';
        out << line;
    }
    if (!out) fail(cat("short write to ", path));
}

}  // namespace dgfd
