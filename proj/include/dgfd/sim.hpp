#pragma once

#include <cstdint>
#include <string>

#include "dgfd/signal.hpp"
#include "json.hpp"

namespace dgfd {

/// A steady operating condition of the rig.
struct ConditionSpec {
    double speed_rpm = 0.0;
    double torque_nm = 0.0;
};

void to_json(nlohmann::json& j, const ConditionSpec& c);
void from_json(const nlohmann::json& j, ConditionSpec& c);

enum class FaultClass : int { Healthy = 0, GearWear = 1, TeethBreak = 2, TeethCrack = 3 };
inline constexpr int kNumFaultClasses = 4;

const char* fault_name(FaultClass f);
/// Accepts healthy|wear|break|crack.
FaultClass fault_from_name(const std::string& name);

struct SimConfig {
    int teeth_count = 24;
    double base_amplitude = 1.0;
    double noise_std = 0.3;                // additive white noise, not torque-scaled
    double wear_harmonic_gain = 1.5;       // extra gain on mesh harmonics 2..3
    double break_impulse_amplitude = 3.0;  // burst peak relative to base amplitude
    double crack_modulation_depth = 0.5;   // AM depth at shaft frequency
    double speed_wander = 0.015;           // relative speed regulation error per recording
    double amp_jitter = 0.18;              // relative harmonic amplitude drift per recording
    double level_drift = 0.3;              // relative overall excitation drift per recording
    uint64_t rig_seed = 1;  // sensor placement and phase structure; shared per rig
    uint64_t seed = 1;      // per-recording randomness (start angle, drift, noise)
};

void to_json(nlohmann::json& j, const SimConfig& cfg);
void from_json(const nlohmann::json& j, SimConfig& cfg);

/// Generates a 6-channel vibration signal at 12800 Hz.
///
/// Healthy content is three gear-mesh harmonics (f_m = rpm/60 * teeth) shaped
/// by a fixed housing resonance curve, so the harmonic ratios change with
/// speed while torque only scales amplitudes. Wear boosts the higher mesh
/// harmonics, a broken tooth adds damped impulse bursts once per shaft
/// revolution, and a cracked tooth amplitude-modulates the mesh tones at the
/// shaft frequency (sidebands at f_m ± f_r). Two source waveforms (two sensor
/// locations) are mixed into six channels by a seeded fixed mixing matrix,
/// plus white noise.
MultichannelSignal synth_signal(const ConditionSpec& cond, FaultClass fault, double duration_s,
                                const SimConfig& cfg);

/// Emits the MCC5-THU CSV schema: speed and load as constant columns followed
/// by the six vibration channels.
void write_mcc5_csv(const MultichannelSignal& vib, const ConditionSpec& cond, const std::string& path);

}  // namespace dgfd
