#include "dgfd/signal.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

#include "dgfd/common.hpp"

namespace dgfd {

namespace {

const char* kDefaultColumnNames[kMcc5Columns] = {"speed",  "load",   "vib1_x", "vib1_y",
                                                 "vib1_z", "vib2_x", "vib2_y", "vib2_z"};

bool parse_cell(std::string_view cell, double& out) {
    // trim spaces and a possible trailing \r
    size_t b = cell.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return false;
    size_t e = cell.find_last_not_of(" \t\r");
    cell = cell.substr(b, e - b + 1);
    const char* last = cell.data() + cell.size();
    auto [p, ec] = std::from_chars(cell.data(), last, out);
    return ec == std::errc() && p == last;
}

size_t split_row(const std::string& line, std::vector<std::string_view>& cells) {
    cells.clear();
    size_t start = 0;
    while (true) {
        size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.emplace_back(line.data() + start, line.size() - start);
            break;
        }
        cells.emplace_back(line.data() + start, comma - start);
        start = comma + 1;
    }
    return cells.size();
}

}  // namespace

MultichannelSignal load_mcc5_csv(const std::string& path, bool vibration_only) {
    std::ifstream in(path);
    if (!in) fail(cat("cannot open csv file: ", path));

    std::vector<std::string> names;
    std::vector<double> columns[kMcc5Columns];
    std::vector<std::string_view> cells;
    std::string line;
    size_t row = 0;  // 1-based index of the current physical row
    bool saw_data = false;

    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        split_row(line, cells);
        if (cells.size() != kMcc5Columns)
            fail(cat(path, ": row ", row, ": expected ", kMcc5Columns, " columns, got ", cells.size()));
        double v[kMcc5Columns];
        bool numeric = true;
        size_t bad_col = 0;
        for (size_t c = 0; c < kMcc5Columns; ++c) {
            if (!parse_cell(cells[c], v[c])) {
                numeric = false;
                bad_col = c;
                break;
            }
        }
        if (!numeric) {
            if (!saw_data && names.empty() && row == 1) {
                for (const auto& c : cells) {
                    size_t b = c.find_first_not_of(" \t\r");
                    size_t e = c.find_last_not_of(" \t\r");
                    names.emplace_back(b == std::string_view::npos ? std::string_view{} : c.substr(b, e - b + 1));
                }
                continue;  // single header row
            }
            fail(cat(path, ": row ", row, ": non-numeric value in column ", bad_col + 1));
        }
        for (size_t c = 0; c < kMcc5Columns; ++c) columns[c].push_back(v[c]);
        saw_data = true;
    }
    if (!saw_data) fail(cat(path, ": no data rows"));

    if (names.empty())
        for (const char* n : kDefaultColumnNames) names.emplace_back(n);

    size_t first = vibration_only ? kMcc5Columns - kVibrationChannels : 0;
    size_t k = kMcc5Columns - first;
    size_t L = columns[0].size();
    MultichannelSignal sig;
    sig.sample_rate_hz = kMcc5SampleRateHz;
    sig.samples = Tensor({k, L});
    for (size_t c = 0; c < k; ++c) {
        sig.channel_names.push_back(names[first + c]);
        std::memcpy(&sig.samples(c, 0), columns[first + c].data(), L * sizeof(double));
    }
    return sig;
}

size_t window_count(size_t length, size_t window, size_t stride) {
    check(window >= 1 && stride >= 1, "window_count: window and stride must be >= 1");
    check(window <= length, cat("window_count: window ", window, " exceeds signal length ", length));
    return (length - window) / stride + 1;
}

Tensor segment(const MultichannelSignal& sig, size_t window, size_t stride) {
    size_t C = sig.channels(), L = sig.length();
    size_t n = window_count(L, window, stride);
    Tensor out({n, C, window});
    for (size_t i = 0; i < n; ++i)
        for (size_t c = 0; c < C; ++c)
            std::memcpy(&out(i, c, 0), &sig.samples(c, i * stride), window * sizeof(double));
    return out;
}

int WindowedDataset::num_classes() const {
    int t = 0;
    for (int c : class_labels) t = std::max(t, c + 1);
    return t;
}

int WindowedDataset::num_domains() const {
    int m = 0;
    for (int d : domain_labels) m = std::max(m, d + 1);
    return m;
}

Standardizer fit_standardizer(const WindowedDataset& train) {
    check(train.n() >= 1, "fit_standardizer: empty dataset");
    size_t n = train.n(), C = train.channels(), W = train.windows.extent(2);
    Standardizer s;
    s.mean.assign(C, 0.0);
    s.std_dev.assign(C, 0.0);
    double count = static_cast<double>(n * W);
    for (size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double* p = &train.windows(i, c, 0);
            for (size_t t = 0; t < W; ++t) acc += p[t];
        }
        s.mean[c] = acc / count;
        double sq = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const double* p = &train.windows(i, c, 0);
            for (size_t t = 0; t < W; ++t) {
                double d = p[t] - s.mean[c];
                sq += d * d;
            }
        }
        double var = sq / count;
        if (!(var > 0.0)) fail(cat("fit_standardizer: channel ", c, " has zero variance"));
        s.std_dev[c] = std::sqrt(var);
    }
    return s;
}

Tensor apply_standardizer(const Standardizer& s, const Tensor& windows) {
    check(windows.ndim() == 3, cat("apply_standardizer: want [n,C,W], got ", shape_str(windows.shape())));
    size_t n = windows.extent(0), C = windows.extent(1), W = windows.extent(2);
    check(C == s.mean.size() && C == s.std_dev.size(),
          cat("apply_standardizer: stats cover ", s.mean.size(), " channels, data has ", C));
    Tensor out({n, C, W});
    for (size_t i = 0; i < n; ++i)
        for (size_t c = 0; c < C; ++c) {
            double mu = s.mean[c], inv = 1.0 / s.std_dev[c];
            const double* src = &windows(i, c, 0);
            double* dst = &out(i, c, 0);
            for (size_t t = 0; t < W; ++t) dst[t] = (src[t] - mu) * inv;
        }
    return out;
}

WindowedDataset assemble_offline(const std::vector<LabeledSignal>& parts, size_t window, size_t stride,
                                 size_t per_class) {
    check(!parts.empty(), "assemble_offline: no input signals");
    check(per_class >= 1, "assemble_offline: per_class must be >= 1");

    // gather windows per (condition, class) cell; map keeps keys sorted
    std::map<std::pair<int, int>, std::vector<Tensor>> cells;
    size_t C = parts.front().signal.channels();
    for (const auto& part : parts) {
        check(part.signal.channels() == C,
              cat("assemble_offline: channel count mismatch (", part.signal.channels(), " vs ", C, ")"));
        cells[{part.condition, part.fault_class}].push_back(segment(part.signal, window, stride));
    }

    size_t n_total = cells.size() * per_class;
    WindowedDataset ds;
    ds.windows = Tensor({n_total, C, window});
    ds.class_labels.reserve(n_total);
    ds.domain_labels.reserve(n_total);
    ds.window_length = window;
    ds.stride = stride;

    size_t row = 0;
    for (const auto& [key, chunks] : cells) {
        size_t have = 0;
        for (const Tensor& t : chunks) have += t.extent(0);
        if (have < per_class)
            fail(cat("assemble_offline: condition ", key.first, " class ", key.second, " has ", have,
                     " windows, need ", per_class));
        size_t taken = 0;
        for (const Tensor& t : chunks) {
            size_t take = std::min(t.extent(0), per_class - taken);
            if (take == 0) break;
            std::memcpy(&ds.windows(row, 0, 0), t.data(), take * C * window * sizeof(double));
            row += take;
            taken += take;
        }
        for (size_t i = 0; i < per_class; ++i) {
            ds.domain_labels.push_back(key.first);
            ds.class_labels.push_back(key.second);
        }
    }
    return ds;
}

void save_dataset(const WindowedDataset& ds, const std::string& stem, const Standardizer* stats) {
    {
        std::ofstream bin(stem + ".bin", std::ios::binary);
        if (!bin) fail(cat("cannot write ", stem, ".bin"));
        bin.write(reinterpret_cast<const char*>(ds.windows.data()),
                  static_cast<std::streamsize>(ds.windows.size() * sizeof(double)));
        if (!bin) fail(cat("short write to ", stem, ".bin"));
    }
    nlohmann::json j;
    j["shape"] = ds.windows.shape();
    j["class_labels"] = ds.class_labels;
    j["domain_labels"] = ds.domain_labels;
    j["window_length"] = ds.window_length;
    j["stride"] = ds.stride;
    if (stats) {
        j["standardizer"]["mean"] = stats->mean;
        j["standardizer"]["std"] = stats->std_dev;
    }
    std::ofstream js(stem + ".json");
    if (!js) fail(cat("cannot write ", stem, ".json"));
    js << j.dump(2) << "\n";
}

WindowedDataset load_dataset(const std::string& stem, Standardizer* stats) {
    std::ifstream js(stem + ".json");
    if (!js) fail(cat("cannot open ", stem, ".json"));
    nlohmann::json j = nlohmann::json::parse(js);

    WindowedDataset ds;
    std::vector<size_t> shape = j.at("shape").get<std::vector<size_t>>();
    check(shape.size() == 3, cat(stem, ".json: dataset shape must be 3-d"));
    ds.class_labels = j.at("class_labels").get<std::vector<int>>();
    ds.domain_labels = j.at("domain_labels").get<std::vector<int>>();
    ds.window_length = j.at("window_length").get<size_t>();
    ds.stride = j.at("stride").get<size_t>();
    check(ds.class_labels.size() == shape[0] && ds.domain_labels.size() == shape[0],
          cat(stem, ".json: label counts do not match row count"));

    size_t total = shape[0] * shape[1] * shape[2];
    std::vector<double> data(total);
    std::ifstream bin(stem + ".bin", std::ios::binary);
    if (!bin) fail(cat("cannot open ", stem, ".bin"));
    bin.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(total * sizeof(double)));
    if (static_cast<size_t>(bin.gcount()) != total * sizeof(double))
        fail(cat(stem, ".bin: expected ", total * sizeof(double), " bytes"));
    ds.windows = Tensor(shape, std::move(data));

    if (stats) {
        if (j.contains("standardizer")) {
            stats->mean = j["standardizer"].at("mean").get<std::vector<double>>();
            stats->std_dev = j["standardizer"].at("std").get<std::vector<double>>();
        } else {
            stats->mean.clear();
            stats->std_dev.clear();
        }
    }
    return ds;
}

Standardizer load_standardizer(const std::string& stem) {
    std::ifstream js(stem + ".json");
    if (!js) fail(cat("cannot open ", stem, ".json"));
    nlohmann::json j = nlohmann::json::parse(js);
    if (!j.contains("standardizer")) fail(cat(stem, ".json carries no standardizer stats"));
    Standardizer s;
    s.mean = j["standardizer"].at("mean").get<std::vector<double>>();
    s.std_dev = j["standardizer"].at("std").get<std::vector<double>>();
    return s;
}

}  // namespace dgfd
