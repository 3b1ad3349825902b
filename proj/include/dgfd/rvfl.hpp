#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgfd/tensor.hpp"

namespace dgfd {

/// Random vector functional link classifier: a fixed random sigmoid hidden
/// layer plus direct input links, output weights solved in closed form.
struct RvflModel {
    Tensor w;     // [Q,J] hidden weights, fixed after construction
    Tensor b;     // [Q] hidden biases, fixed after construction
    Tensor beta;  // [J+Q, V] solved output weights
    double sigma = 1e-4;
    uint64_t seed = 0;

    size_t input_dim() const { return w.extent(1); }
    size_t hidden_dim() const { return w.extent(0); }
    size_t num_classes() const { return beta.extent(1); }
};

/// Inputs for training: features and one-hot targets.
struct FeatureMatrix {
    Tensor Z;  // [n,J]
    Tensor Y;  // [n,V], rows one-hot
};

Tensor one_hot(const std::vector<int>& labels, int num_classes);
FeatureMatrix make_features(Tensor Z, const std::vector<int>& labels, int num_classes);

/// H[r,i] = sigmoid(w_i . Z[r] + b_i).
Tensor hidden_layer(const RvflModel& m, const Tensor& Z);

/// E = [Z | H], direct links first.
Tensor build_design(const Tensor& Z, const Tensor& H);

/// Ridge solution argmin |Y - E beta|^2 + sigma |beta|^2 via an SPD
/// factorization; uses the dual form E^T (E E^T + sigma I)^{-1} Y when the
/// design is wider than tall. Verifies the normal-equation residual.
Tensor solve_beta(const Tensor& E, const Tensor& Y, double sigma);

RvflModel rvfl_train(const FeatureMatrix& data, int hidden = 100, double sigma = 1e-4, uint64_t seed = 0);

Tensor rvfl_scores(const RvflModel& m, const Tensor& Z);  // Yhat = E beta
/// Row argmax of the scores; ties go to the lowest class index.
std::vector<int> rvfl_predict(const RvflModel& m, const Tensor& Z);

/// Checkpoint: stem.json (dims, sigma, seed) + stem.bin (w, b, beta).
void save_rvfl(const RvflModel& m, const std::string& stem);
RvflModel load_rvfl(const std::string& stem);

}  // namespace dgfd
