#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "prefgen/embed.hpp"
#include "prefgen/hashing.hpp"
#include "prefgen/world.hpp"

namespace prefgen::diffusion {

using Tensor = Eigen::VectorXd;

struct NoiseSchedule {
    int T = 200;
    std::vector<double> beta;       // beta[t-1] for step t in 1..T
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative product
    std::vector<double> sigma;      // sqrt(beta)

    double beta_at(int t) const { return beta[static_cast<size_t>(t - 1)]; }
    double alpha_at(int t) const { return alpha[static_cast<size_t>(t - 1)]; }
    double alpha_bar_at(int t) const { return alpha_bar[static_cast<size_t>(t - 1)]; }
    double sigma_at(int t) const { return sigma[static_cast<size_t>(t - 1)]; }
};

// linear variance schedule, validated (increasing beta, decreasing alpha_bar)
NoiseSchedule make_schedule(int T = 200, double beta_min = 1e-4, double beta_max = 0.02);

// q-sample: sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) z
Tensor forward_noise(const Tensor& x0, int t, const Tensor& z, const NoiseSchedule& sched);

// Conditional noise predictor. The null condition (nullptr) is the zero
// embedding, the canonical "no condition" token from training dropout.
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual int dim() const = 0;
    virtual Tensor predict(const Tensor& x_t, int t, const embed::Embedding* cond) const = 0;
    // one column per condition; default implementation loops predict()
    virtual Eigen::MatrixXd predict_multi(const Tensor& x_t, int t,
                                          const std::vector<const embed::Embedding*>& conds) const;
};

// Weights of the small conditional noise model:
//   eps_hat = u[t] * x_t + b[t] + V * mlp([pool(x_t), time_feats, condition])
struct DenoiserParams {
    int width = 32, height = 32;
    int T = 200;
    double beta_min = 1e-4, beta_max = 0.02;
    int hidden1 = 256, hidden2 = 224;
    uint64_t train_seed = 0;
    int epochs = 0;
    double final_loss = 0.0;

    Eigen::MatrixXd w1, w2, decoder;          // layer weights
    Eigen::VectorXd b1, b2, out_bias;
    Eigen::VectorXd skip_scale, skip_bias;    // u[t], b[t]

    int image_dim() const { return 3 * width * height; }
};

class MlpDenoiser : public Denoiser {
public:
    explicit MlpDenoiser(DenoiserParams params);
    int dim() const override { return params_.image_dim(); }
    Tensor predict(const Tensor& x_t, int t, const embed::Embedding* cond) const override;
    Eigen::MatrixXd predict_multi(const Tensor& x_t, int t,
                                  const std::vector<const embed::Embedding*>& conds) const override;
    const DenoiserParams& params() const { return params_; }

private:
    DenoiserParams params_;
};

struct TrainPair {
    Tensor image;              // in [-1,1]
    embed::Embedding condition;
};

struct TrainConfig {
    int epochs = 16;
    int batch = 64;
    double lr = 2e-3;
    double cond_dropout = 0.1;      // whole condition zeroed (unconditional term)
    double content_dropout = 0.25;  // content block zeroed (pure-VP conditions)
    double channel_dropout = 0.25;  // per style channel: value and mask zeroed
    int hidden1 = 256;
    int hidden2 = 224;
    uint64_t seed = 1;
};

struct TrainResult {
    DenoiserParams params;
    std::vector<double> epoch_loss;
};

// Minimizes MSE between predicted and true noise over the paired dataset.
// Deterministic given cfg.seed. Throws NumericalError on a non-finite loss.
TrainResult train_denoiser(const std::vector<TrainPair>& dataset, const NoiseSchedule& sched,
                           const TrainConfig& cfg);

// Uniformly covers the style space: random content and per-channel uniform
// styles rendered at `size`, conditions carrying the full style target.
std::vector<TrainPair> make_training_set(int n, int size, uint64_t seed);

struct GuidanceConfig {
    double w = 3.0;     // guidance scale
    double beta = 0.0;  // personalization degree
    enum class CoefficientMode { kStandardDdpm, kPaperLiteral };
    CoefficientMode coefficient_mode = CoefficientMode::kStandardDdpm;
    bool use_noise_guidance = true;  // apply beta inside the guidance combination
};

// eps_theta(x,t,E(VP+)) - eps_theta(x,t,E(VP-))
Tensor vp_noise(const Tensor& x_t, int t, const embed::Embedding& vp_plus,
                const embed::Embedding& vp_minus, const Denoiser& den);

// (1-w) eps(x,t) + w (eps(x,t,p) + beta * eps_vp(x,t))
Tensor guided_noise(const Tensor& x_t, int t, const embed::Embedding& p_emb,
                    const embed::Embedding& vp_plus, const embed::Embedding& vp_minus,
                    const GuidanceConfig& cfg, const Denoiser& den);

// Ancestral sampling loop; prompt_emb must already be composed (line 1 of the
// sampling procedure happens at the call site). Deterministic given seed.
world::Image sample(const embed::Embedding& prompt_emb_composed, const embed::Embedding& vp_plus,
                    const embed::Embedding& vp_minus, const GuidanceConfig& cfg,
                    const NoiseSchedule& sched, const Denoiser& den, int width, int height,
                    uint64_t seed);

// checkpoint IO: little-endian binary with a validated header
void save_checkpoint(const DenoiserParams& params, const std::string& path);
DenoiserParams load_checkpoint(const std::string& path);

}  // namespace prefgen::diffusion
