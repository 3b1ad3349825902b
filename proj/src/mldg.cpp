#include "dgfd/mldg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dgfd/common.hpp"

namespace dgfd {

const char* meta_mode_name(MetaMode m) { return m == MetaMode::FirstOrder ? "first-order" : "exact-hvp"; }

MetaMode meta_mode_from_name(const std::string& name) {
    if (name == "first-order") return MetaMode::FirstOrder;
    if (name == "exact-hvp") return MetaMode::ExactHvp;
    throw std::invalid_argument(cat("unknown meta mode '", name, "' (want first-order|exact-hvp)"));
}

void validate(const TrainConfig& cfg, int n_domains) {
    check(cfg.alpha > 0.0, "train config: alpha must be > 0");
    check(cfg.eta > 0.0, "train config: eta must be > 0");
    check(cfg.rho > 0.0 && cfg.rho < 1.0, "train config: rho must be in (0,1)");
    check(cfg.gamma_max >= 0.0, "train config: gamma_max must be >= 0");
    check(cfg.epochs >= 0, "train config: epochs must be >= 0");
    check(cfg.batch_size >= 1, "train config: batch_size must be >= 1");
    check(cfg.hvp_step > 0.0, "train config: hvp_step must be > 0");
    check(n_domains >= 2, cat("train config: need at least 2 source domains, got ", n_domains));
    check(cfg.meta_train_domains >= 1 && cfg.meta_train_domains < n_domains,
          cat("train config: meta_train_domains must be in [1, ", n_domains, "), got ", cfg.meta_train_domains));
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
    j = nlohmann::json{{"alpha", cfg.alpha},
                       {"eta", cfg.eta},
                       {"gamma_max", cfg.gamma_max},
                       {"rho", cfg.rho},
                       {"epochs", cfg.epochs},
                       {"batch_size", cfg.batch_size},
                       {"meta_train_domains", cfg.meta_train_domains},
                       {"meta_mode", meta_mode_name(cfg.mode)},
                       {"hvp_step", cfg.hvp_step},
                       {"seed", cfg.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
    cfg.alpha = j.value("alpha", cfg.alpha);
    cfg.eta = j.value("eta", cfg.eta);
    cfg.gamma_max = j.value("gamma_max", cfg.gamma_max);
    cfg.rho = j.value("rho", cfg.rho);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.meta_train_domains = j.value("meta_train_domains", cfg.meta_train_domains);
    if (j.contains("meta_mode")) cfg.mode = meta_mode_from_name(j.at("meta_mode").get<std::string>());
    cfg.hvp_step = j.value("hvp_step", cfg.hvp_step);
    cfg.seed = j.value("seed", cfg.seed);
}

MetaSplit sample_meta_split(int n_domains, int p, std::mt19937_64& rng) {
    check(n_domains >= 2 && p >= 1 && p < n_domains, "sample_meta_split: need 1 <= p < n_domains");
    std::vector<int> ids(n_domains);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), rng);
    MetaSplit split;
    split.meta_train.assign(ids.begin(), ids.begin() + p);
    split.meta_test.assign(ids.begin() + p, ids.end());
    return split;
}

double gamma_schedule(int epoch, const TrainConfig& cfg) {
    check(epoch >= 0, "gamma_schedule: epoch must be >= 0");
    return cfg.gamma_max * (1.0 - std::pow(cfg.rho, epoch));
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    check(logits.ndim() == 2, cat("cross_entropy: want [B,T] logits, got ", shape_str(logits.shape())));
    size_t B = logits.extent(0), T = logits.extent(1);
    check(B >= 1, "cross_entropy: empty batch");
    check(labels.size() == B, cat("cross_entropy: ", B, " rows but ", labels.size(), " labels"));
    double total = 0.0;
    for (size_t i = 0; i < B; ++i) {
        int y = labels[i];
        check(y >= 0 && static_cast<size_t>(y) < T, cat("cross_entropy: label ", y, " out of [0,", T, ")"));
        double m = logits(i, 0);
        for (size_t t = 1; t < T; ++t) m = std::max(m, logits(i, t));
        double lse = 0.0;
        for (size_t t = 0; t < T; ++t) lse += std::exp(logits(i, t) - m);
        total += m + std::log(lse) - logits(i, static_cast<size_t>(y));
    }
    return total / static_cast<double>(B);
}

ad::Var domain_avg_loss(ad::Graph& g, const ParamBinding& b, const BatchLoss& f,
                        const std::vector<DomainBatch>& batches) {
    check(!batches.empty(), "domain_avg_loss: empty domain subset");
    ad::Var acc = f(g, b, batches[0]);
    for (size_t i = 1; i < batches.size(); ++i) acc = g.add(acc, f(g, b, batches[i]));
    return batches.size() == 1 ? acc : g.scale(acc, 1.0 / static_cast<double>(batches.size()));
}

namespace {

LossBuilder subset_builder(const BatchLoss& f, const std::vector<DomainBatch>& batches) {
    return [&f, &batches](ad::Graph& g, const ParamBinding& b) { return domain_avg_loss(g, b, f, batches); };
}

}  // namespace

ParamVector meta_gradient(const BatchLoss& f, const std::vector<DomainBatch>& mtrain,
                          const std::vector<DomainBatch>& mtest, const ParamVector& theta, double alpha,
                          double gamma, MetaMode mode, double hvp_step, double* loss_mtrain,
                          double* loss_mtest) {
    check(alpha >= 0.0, "meta_gradient: alpha must be >= 0");
    LossBuilder train_loss = subset_builder(f, mtrain);
    LossBuilder test_loss = subset_builder(f, mtest);

    ParamVector g_tr = theta.zeros_like();
    double l_tr = loss_and_grad(train_loss, theta, &g_tr);

    ParamVector inner = theta;
    inner.axpy(-alpha, g_tr);

    ParamVector g_te = inner.zeros_like();
    double l_te = loss_and_grad(test_loss, inner, &g_te);

    if (!std::isfinite(l_tr) || !std::isfinite(l_te))
        fail(cat("meta_gradient: non-finite loss (mtrain=", l_tr, ", mtest=", l_te, ")"));

    ParamVector g = g_tr;
    if (gamma != 0.0) {
        if (mode == MetaMode::ExactHvp && alpha > 0.0) {
            double nte = g_te.norm();
            if (nte > 0.0) {
                // hvp along the unit direction, scaled back by |g_te|
                ParamVector v = g_te;
                v.scale(1.0 / nte);
                ParamVector hv = hvp(train_loss, theta, v, hvp_step);
                hv.scale(nte);
                ParamVector corrected = g_te;
                corrected.axpy(-alpha, hv);
                g.axpy(gamma, corrected);
            }
        } else {
            g.axpy(gamma, g_te);
        }
    }
    if (!g.all_finite()) fail("meta_gradient: non-finite meta-gradient");
    if (loss_mtrain) *loss_mtrain = l_tr;
    if (loss_mtest) *loss_mtest = l_te;
    return g;
}

StepReport mldg_step(ParamVector& theta, const BatchLoss& f, const std::vector<DomainBatch>& mtrain,
                     const std::vector<DomainBatch>& mtest, double alpha, double eta, double gamma,
                     MetaMode mode, double hvp_step) {
    StepReport rep;
    rep.gamma = gamma;
    ParamVector g = meta_gradient(f, mtrain, mtest, theta, alpha, gamma, mode, hvp_step, &rep.loss_mtrain,
                                  &rep.loss_mtest);
    theta.axpy(-eta, g);
    return rep;
}

namespace {

/// Shuffled per-domain cursors; a fresh permutation whenever one runs dry.
class DomainSampler {
public:
    DomainSampler(const WindowedDataset& data, int n_domains, uint64_t seed)
        : data_(&data), rng_(seed), order_(n_domains), cursor_(n_domains, 0) {
        for (size_t i = 0; i < data.domain_labels.size(); ++i)
            order_[static_cast<size_t>(data.domain_labels[i])].push_back(i);
        for (auto& ids : order_) {
            check(!ids.empty(), "train: a domain has no windows");
            std::shuffle(ids.begin(), ids.end(), rng_);
        }
    }

    DomainBatch next(int domain, int batch_size) {
        auto& ids = order_[static_cast<size_t>(domain)];
        auto& cur = cursor_[static_cast<size_t>(domain)];
        size_t C = data_->channels(), W = data_->windows.extent(2);
        DomainBatch out;
        out.inputs = Tensor({static_cast<size_t>(batch_size), C, W});
        out.labels.resize(static_cast<size_t>(batch_size));
        for (int i = 0; i < batch_size; ++i) {
            if (cur == ids.size()) {
                std::shuffle(ids.begin(), ids.end(), rng_);
                cur = 0;
            }
            size_t row = ids[cur++];
            std::copy(&data_->windows(row, 0, 0), &data_->windows(row, 0, 0) + C * W,
                      &out.inputs(static_cast<size_t>(i), 0, 0));
            out.labels[static_cast<size_t>(i)] = data_->class_labels[row];
        }
        return out;
    }

private:
    const WindowedDataset* data_;
    std::mt19937_64 rng_;
    std::vector<std::vector<size_t>> order_;
    std::vector<size_t> cursor_;
};

}  // namespace

BatchLoss model_batch_loss(const ModelConfig& cfg) {
    return [cfg](ad::Graph& g, const ParamBinding& b, const DomainBatch& batch) {
        ad::Var z = encoder_graph(g, b, "enc.", g.constant(batch.inputs), cfg);
        ad::Var logits = head_graph(g, b, "head.", z, cfg);
        return g.softmax_cross_entropy(logits, batch.labels);
    };
}

TrainResult train(const WindowedDataset& data, const ModelConfig& mcfg, const TrainConfig& tcfg) {
    int n_domains = data.num_domains();
    validate(tcfg, n_domains);
    validate(mcfg);
    check(data.n() >= 1, "train: empty dataset");
    check(data.num_classes() <= mcfg.num_classes,
          cat("train: dataset has ", data.num_classes(), " classes, model expects <= ", mcfg.num_classes));

    auto [enc, head] = init_params(mcfg, derive_seed(tcfg.seed, "model.init"));
    TrainResult result;
    result.model.cfg = mcfg;
    result.model.theta = merge_theta(enc, head);

    DomainSampler sampler(data, n_domains, derive_seed(tcfg.seed, "mldg.sample"));
    std::mt19937_64 split_rng(derive_seed(tcfg.seed, "mldg.split"));
    BatchLoss f = model_batch_loss(mcfg);

    size_t denom = static_cast<size_t>(tcfg.batch_size) * static_cast<size_t>(n_domains);
    int steps_per_epoch = static_cast<int>((data.n() + denom - 1) / denom);

    for (int e = 0; e < tcfg.epochs; ++e) {
        double gamma = gamma_schedule(e, tcfg);
        EpochStats stats;
        stats.epoch = e;
        stats.gamma = gamma;
        for (int s = 0; s < steps_per_epoch; ++s) {
            MetaSplit split = sample_meta_split(n_domains, tcfg.meta_train_domains, split_rng);
            std::vector<DomainBatch> mtrain, mtest;
            for (int d : split.meta_train) mtrain.push_back(sampler.next(d, tcfg.batch_size));
            for (int d : split.meta_test) mtest.push_back(sampler.next(d, tcfg.batch_size));
            StepReport rep;
            try {
                rep = mldg_step(result.model.theta, f, mtrain, mtest, tcfg.alpha, tcfg.eta, gamma, tcfg.mode,
                                tcfg.hvp_step);
            } catch (const std::runtime_error& ex) {
                fail(cat("train: epoch ", e, " step ", s, ": ", ex.what()));
            }
            stats.loss_mtrain += rep.loss_mtrain / steps_per_epoch;
            stats.loss_mtest += rep.loss_mtest / steps_per_epoch;
        }
        result.history.push_back(stats);
    }
    return result;
}

void write_history_csv(const std::vector<EpochStats>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail(cat("cannot write ", path));
    out << "epoch,loss_mtrain,loss_mtest,gamma\n";
    char buf[96];
    for (const auto& h : history) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", h.epoch, h.loss_mtrain, h.loss_mtest, h.gamma);
        out << buf;
    }
}

}  // namespace dgfd
