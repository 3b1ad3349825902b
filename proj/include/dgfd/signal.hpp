#pragma once

#include <string>
#include <vector>

#include "dgfd/tensor.hpp"

namespace dgfd {

inline constexpr double kMcc5SampleRateHz = 12800.0;
inline constexpr size_t kMcc5Columns = 8;  // speed, load, two x/y/z vibration triples
inline constexpr size_t kVibrationChannels = 6;

/// Time-aligned multi-sensor waveform. samples is [channels, length].
struct MultichannelSignal {
    double sample_rate_hz = 0.0;
    std::vector<std::string> channel_names;
    Tensor samples;

    size_t channels() const { return samples.extent(0); }
    size_t length() const { return samples.extent(1); }
};

/// Reads an MCC5-THU-format CSV: 8 numeric columns
/// (speed, load, vib1 x/y/z, vib2 x/y/z), optional single header row.
/// With vibration_only, keeps the 6 vibration channels in file order.
MultichannelSignal load_mcc5_csv(const std::string& path, bool vibration_only = true);

/// Number of length-W windows at stride s over an L-sample signal.
size_t window_count(size_t length, size_t window, size_t stride);

/// Cuts [channels, L] into materialized windows [n, channels, W];
/// window i covers samples [i*s, i*s + W).
Tensor segment(const MultichannelSignal& sig, size_t window, size_t stride);

/// Segmented windows with class and condition (domain) labels.
struct WindowedDataset {
    Tensor windows;  // [n, C, W]
    std::vector<int> class_labels;
    std::vector<int> domain_labels;
    size_t window_length = 0;
    size_t stride = 0;

    size_t n() const { return windows.ndim() == 3 ? windows.extent(0) : 0; }
    size_t channels() const { return windows.extent(1); }
    int num_classes() const;
    int num_domains() const;
};

/// Per-channel z-scoring statistics, fit on training windows only.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> std_dev;
};

Standardizer fit_standardizer(const WindowedDataset& train);

/// Applies stored statistics to [n, C, W] windows; no refitting.
Tensor apply_standardizer(const Standardizer& s, const Tensor& windows);

/// One recording with its condition (domain) and fault-class labels.
struct LabeledSignal {
    int condition = 0;
    int fault_class = 0;
    MultichannelSignal signal;
};

/// Segments every recording and merges them by sorted (condition, class) key,
/// truncating each cell to per_class windows. Errors on any shortfall.
WindowedDataset assemble_offline(const std::vector<LabeledSignal>& parts, size_t window, size_t stride,
                                 size_t per_class);

/// Writes stem.bin (row-major little-endian 64-bit reals) and stem.json
/// (shape, labels, stride, optional standardizer stats).
void save_dataset(const WindowedDataset& ds, const std::string& stem, const Standardizer* stats = nullptr);
WindowedDataset load_dataset(const std::string& stem, Standardizer* stats = nullptr);

/// Reads only the standardizer stats from stem.json; fails if absent.
Standardizer load_standardizer(const std::string& stem);

}  // namespace dgfd
