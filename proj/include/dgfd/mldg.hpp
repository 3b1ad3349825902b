#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dgfd/models.hpp"
#include "dgfd/params.hpp"
#include "dgfd/signal.hpp"

namespace dgfd {

enum class MetaMode { FirstOrder, ExactHvp };

const char* meta_mode_name(MetaMode m);
MetaMode meta_mode_from_name(const std::string& name);  // first-order | exact-hvp

struct TrainConfig {
    double alpha = 0.005;  // inner (meta-train) step size
    double eta = 0.01;     // outer SGD learning rate
    double gamma_max = 1.0;
    double rho = 0.95;  // gamma schedule decay
    int epochs = 10;
    int batch_size = 64;
    int meta_train_domains = 1;  // P
    MetaMode mode = MetaMode::FirstOrder;
    double hvp_step = 1e-4;
    uint64_t seed = 0;
};

void validate(const TrainConfig& cfg, int n_domains);
void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

/// Per-step partition of the source domains.
struct MetaSplit {
    std::vector<int> meta_train;  // |P|
    std::vector<int> meta_test;   // the rest
};

MetaSplit sample_meta_split(int n_domains, int p, std::mt19937_64& rng);

/// gamma(e) = gamma_max * (1 - rho^e): 0 at the first epoch, saturating.
double gamma_schedule(int epoch, const TrainConfig& cfg);

/// Mean cross-entropy of a logits matrix [B,T] against integer labels.
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// One sampled batch from a single domain.
struct DomainBatch {
    Tensor inputs;
    std::vector<int> labels;
};

/// Builds one domain-batch mean loss on the graph.
using BatchLoss = std::function<ad::Var(ad::Graph&, const ParamBinding&, const DomainBatch&)>;

/// Unweighted mean over domains of per-domain batch loss.
ad::Var domain_avg_loss(ad::Graph& g, const ParamBinding& b, const BatchLoss& f,
                        const std::vector<DomainBatch>& batches);

/// The update direction of the meta-objective
///   L_mtrain(Θ) + gamma * L_mtest(Θ - alpha * grad L_mtrain(Θ))
/// for fixed batches. FirstOrder drops the curvature term; ExactHvp keeps it
/// via a finite-difference Hessian-vector product.
ParamVector meta_gradient(const BatchLoss& f, const std::vector<DomainBatch>& mtrain,
                          const std::vector<DomainBatch>& mtest, const ParamVector& theta, double alpha,
                          double gamma, MetaMode mode, double hvp_step, double* loss_mtrain = nullptr,
                          double* loss_mtest = nullptr);

struct StepReport {
    double loss_mtrain = 0.0;
    double loss_mtest = 0.0;  // evaluated at the inner-updated parameters
    double gamma = 0.0;
};

/// In-place SGD step on the meta-gradient: Θ <- Θ - eta * g.
StepReport mldg_step(ParamVector& theta, const BatchLoss& f, const std::vector<DomainBatch>& mtrain,
                     const std::vector<DomainBatch>& mtest, double alpha, double eta, double gamma,
                     MetaMode mode, double hvp_step);

struct EpochStats {
    int epoch = 0;
    double loss_mtrain = 0.0;
    double loss_mtest = 0.0;
    double gamma = 0.0;
};

struct TrainResult {
    DgeModel model;
    std::vector<EpochStats> history;
};

/// Trains C(F(.)) on a windowed multi-domain dataset with a fresh random
/// meta split every step. Batches are sampled per domain from shuffled
/// cursors; one epoch is ceil(n / (batch * n_domains)) steps.
TrainResult train(const WindowedDataset& data, const ModelConfig& mcfg, const TrainConfig& tcfg);

/// Loss built on encoder+head over a [B,C,W] batch.
BatchLoss model_batch_loss(const ModelConfig& cfg);

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path);

}  // namespace dgfd
