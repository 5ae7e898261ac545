#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "prefgen/agents.hpp"
#include "prefgen/world.hpp"

namespace prefgen::proxy {

// Per-user context: liked and disliked example images with cached features.
class ContextSet {
public:
    ContextSet() = default;
    ContextSet(std::vector<world::Image> liked, std::vector<world::Image> disliked);

    const std::vector<world::Image>& liked() const { return liked_; }
    const std::vector<world::Image>& disliked() const { return disliked_; }
    const std::vector<world::FeatureVector>& liked_features() const { return liked_f_; }
    const std::vector<world::FeatureVector>& disliked_features() const { return disliked_f_; }
    bool empty() const { return liked_.empty() && disliked_.empty(); }
    void check_dims(const world::Image& query) const;

private:
    std::vector<world::Image> liked_, disliked_;
    std::vector<world::FeatureVector> liked_f_, disliked_f_;
};

// circular-aware per-channel mean of measured features
world::FeatureVector centroid(const std::vector<world::FeatureVector>& features);

constexpr int kProxyFeatureDim = 2 + 2 * taxonomy::kFeatureDim;
constexpr double kNeutralDistance = 0.3;  // stand-in distance for an empty side

// difference features: [dist(f,C+), dist(f,C-), |f-C+| per ch, |f-C-| per ch]
Eigen::VectorXd difference_features(const world::FeatureVector& query, const ContextSet& ctx);

struct ProxyModel {
    enum class Variant { kCentroid, kTrained };
    Variant variant = Variant::kCentroid;
    double kappa = 8.0;                  // centroid sharpness
    Eigen::VectorXd weights;             // bias + kProxyFeatureDim, trained variant
    uint64_t train_seed = 0;
    int epochs = 0;
    double final_loss = 0.0;
    double heldout_accuracy = 0.0;

    static ProxyModel centroid_model(double kappa = 8.0);
};

// Pr(query is liked | context). Empty context scores exactly 0.5.
// Throws ConfigError when query dimensions differ from the context images.
double score(const ProxyModel& model, const world::Image& query, const ContextSet& ctx);

struct LabeledQuery {
    Eigen::VectorXd features;  // difference_features of (query, ctx)
    int label = 0;             // 1 liked, 0 not
};

struct ProxyTrainConfig {
    int epochs = 400;
    double lr = 0.5;
    double l2 = 1e-4;
    enum class Init { kZero, kCentroid };
    Init init = Init::kZero;
    double kappa = 8.0;  // used by centroid init and kept on the model
    uint64_t seed = 1;
};

// Full-batch logistic regression with cross-entropy loss; deterministic.
// Throws ConfigError on degenerate labels (all one class).
ProxyModel train_proxy(const std::vector<LabeledQuery>& train,
                       const std::vector<LabeledQuery>& heldout, const ProxyTrainConfig& cfg);

struct CurvePoint {
    int context_size;
    double accuracy;
    long trials;
};

// Paired discrimination accuracy (personalized vs random query) as a function
// of per-side context size, averaged over the cohort.
std::vector<CurvePoint> context_size_curve(const agents::Cohort& cohort,
                                           const std::vector<int>& sizes, int image_size,
                                           double kappa, uint64_t seed);

// deterministic render of a cohort image meta
world::Image render_meta(const agents::ImageMeta& meta, uint64_t cohort_seed, int image_size);

void save_proxy(const ProxyModel& model, const std::string& path);
ProxyModel load_proxy(const std::string& path);

}  // namespace prefgen::proxy
