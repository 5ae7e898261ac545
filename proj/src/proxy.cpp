#include "prefgen/proxy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "prefgen/errors.hpp"
#include "prefgen/hashing.hpp"

namespace prefgen::proxy {

namespace {

constexpr double kTwoPi = 6.28318530717958647692;

double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

ContextSet::ContextSet(std::vector<world::Image> liked, std::vector<world::Image> disliked)
    : liked_(std::move(liked)), disliked_(std::move(disliked)) {
    int w = -1, h = -1;
    auto note_dims = [&](const world::Image& img) {
        if (w < 0) {
            w = img.width;
            h = img.height;
        } else if (img.width != w || img.height != h) {
            throw ConfigError("context images have mismatched dimensions");
        }
    };
    for (const auto& img : liked_) {
        note_dims(img);
        liked_f_.push_back(world::measure(img));
    }
    for (const auto& img : disliked_) {
        note_dims(img);
        disliked_f_.push_back(world::measure(img));
    }
}

void ContextSet::check_dims(const world::Image& query) const {
    const world::Image* ref = nullptr;
    if (!liked_.empty()) ref = &liked_.front();
    else if (!disliked_.empty()) ref = &disliked_.front();
    if (ref && (query.width != ref->width || query.height != ref->height))
        throw ConfigError("query dimensions do not match context images");
}

world::FeatureVector centroid(const std::vector<world::FeatureVector>& features) {
    world::FeatureVector out;
    for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
        double sum = 0.0, sx = 0.0, sy = 0.0;
        int n = 0;
        for (const auto& f : features) {
            if (!f.defined[static_cast<size_t>(c)]) continue;
            double v = f.values[static_cast<size_t>(c)];
            if (taxonomy::is_circular_channel(c)) {
                sx += std::cos(kTwoPi * v);
                sy += std::sin(kTwoPi * v);
            } else {
                sum += v;
            }
            ++n;
        }
        if (n == 0) continue;
        out.defined[static_cast<size_t>(c)] = true;
        if (taxonomy::is_circular_channel(c)) {
            double ang = std::atan2(sy, sx) / kTwoPi;
            out.values[static_cast<size_t>(c)] = ang < 0.0 ? ang + 1.0 : ang;
        } else {
            out.values[static_cast<size_t>(c)] = sum / n;
        }
    }
    return out;
}

Eigen::VectorXd difference_features(const world::FeatureVector& query, const ContextSet& ctx) {
    Eigen::VectorXd feats(kProxyFeatureDim);
    world::FeatureVector c_plus = centroid(ctx.liked_features());
    world::FeatureVector c_minus = centroid(ctx.disliked_features());
    double d_plus = ctx.liked_features().empty() ? kNeutralDistance
                                                 : world::feature_distance(query, c_plus);
    double d_minus = ctx.disliked_features().empty() ? kNeutralDistance
                                                     : world::feature_distance(query, c_minus);
    if (std::isnan(d_plus)) d_plus = kNeutralDistance;
    if (std::isnan(d_minus)) d_minus = kNeutralDistance;
    feats[0] = d_plus;
    feats[1] = d_minus;
    for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
        bool q_ok = query.defined[static_cast<size_t>(c)];
        feats[2 + c] = q_ok && c_plus.defined[static_cast<size_t>(c)]
                           ? world::channel_distance(query.values[static_cast<size_t>(c)],
                                                     c_plus.values[static_cast<size_t>(c)], c)
                           : kNeutralDistance;
        feats[2 + taxonomy::kFeatureDim + c] =
            q_ok && c_minus.defined[static_cast<size_t>(c)]
                ? world::channel_distance(query.values[static_cast<size_t>(c)],
                                          c_minus.values[static_cast<size_t>(c)], c)
                : kNeutralDistance;
    }
    return feats;
}

ProxyModel ProxyModel::centroid_model(double kappa) {
    ProxyModel m;
    m.variant = Variant::kCentroid;
    m.kappa = kappa;
    return m;
}

double score(const ProxyModel& model, const world::Image& query, const ContextSet& ctx) {
    if (ctx.empty()) return 0.5;  // defined fallback, exact
    ctx.check_dims(query);
    world::FeatureVector f = world::measure(query);
    Eigen::VectorXd feats = difference_features(f, ctx);
    if (model.variant == ProxyModel::Variant::kCentroid)
        return logistic(model.kappa * (feats[1] - feats[0]));
    if (model.weights.size() != kProxyFeatureDim + 1)
        throw ConfigError("trained proxy has no weights");
    double z = model.weights[0];
    for (int i = 0; i < kProxyFeatureDim; ++i) z += model.weights[i + 1] * feats[i];
    return logistic(z);
}

namespace {

Eigen::VectorXd centroid_equivalent_weights(double kappa) {
    Eigen::VectorXd w = Eigen::VectorXd::Zero(kProxyFeatureDim + 1);
    w[1] = -kappa;  // dist to liked centroid
    w[2] = kappa;   // dist to disliked centroid
    return w;
}

double paired_eval(const ProxyModel& model, const std::vector<LabeledQuery>& data) {
    // pair each positive with the next negative, count score orderings
    std::vector<const LabeledQuery*> pos, neg;
    for (const auto& q : data) (q.label == 1 ? pos : neg).push_back(&q);
    size_t n = std::min(pos.size(), neg.size());
    if (n == 0) return 0.5;
    auto score_of = [&](const LabeledQuery& q) {
        if (model.variant == ProxyModel::Variant::kCentroid)
            return logistic(model.kappa * (q.features[1] - q.features[0]));
        double z = model.weights[0];
        for (int i = 0; i < kProxyFeatureDim; ++i) z += model.weights[i + 1] * q.features[i];
        return logistic(z);
    };
    double correct = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double sp = score_of(*pos[i]), sn = score_of(*neg[i]);
        if (sp > sn) correct += 1.0;
        else if (sp == sn) correct += 0.5;
    }
    return correct / static_cast<double>(n);
}

}  // namespace

ProxyModel train_proxy(const std::vector<LabeledQuery>& train,
                       const std::vector<LabeledQuery>& heldout, const ProxyTrainConfig& cfg) {
    if (train.empty()) throw ConfigError("train_proxy: empty training set");
    bool has_pos = false, has_neg = false;
    for (const auto& q : train) (q.label == 1 ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw ConfigError("train_proxy: degenerate labels (all one class)");

    const long n = static_cast<long>(train.size());
    Eigen::MatrixXd X(n, kProxyFeatureDim + 1);
    Eigen::VectorXd y(n);
    for (long i = 0; i < n; ++i) {
        X(i, 0) = 1.0;
        X.row(i).tail(kProxyFeatureDim) = train[static_cast<size_t>(i)].features.transpose();
        y[i] = train[static_cast<size_t>(i)].label;
    }

    Eigen::VectorXd w = cfg.init == ProxyTrainConfig::Init::kCentroid
                            ? centroid_equivalent_weights(cfg.kappa)
                            : Eigen::VectorXd::Zero(kProxyFeatureDim + 1);
    double loss = std::log(2.0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Eigen::VectorXd z = X * w;
        Eigen::VectorXd s = z.unaryExpr([](double v) { return logistic(v); });
        loss = 0.0;
        for (long i = 0; i < n; ++i) {
            double p = std::clamp(s[i], 1e-12, 1.0 - 1e-12);
            loss += -(y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p));
        }
        loss = loss / static_cast<double>(n) + 0.5 * cfg.l2 * w.squaredNorm();
        if (!std::isfinite(loss)) throw NumericalError("non-finite proxy training loss");
        Eigen::VectorXd grad = X.transpose() * (s - y) / static_cast<double>(n) + cfg.l2 * w;
        w -= cfg.lr * grad;
    }

    ProxyModel model;
    model.variant = ProxyModel::Variant::kTrained;
    model.kappa = cfg.kappa;
    model.weights = w;
    model.train_seed = cfg.seed;
    model.epochs = cfg.epochs;
    model.final_loss = loss;
    model.heldout_accuracy = paired_eval(model, heldout.empty() ? train : heldout);
    return model;
}

world::Image render_meta(const agents::ImageMeta& meta, uint64_t cohort_seed, int image_size) {
    uint64_t seed = mix64(cohort_seed, fnv1a64(meta.image_ref));
    DetRng rng(seed);
    world::Content content;
    switch (rng.below(3)) {
        case 0: content.shape = world::Shape::kCircle; break;
        case 1: content.shape = world::Shape::kSquare; break;
        default: content.shape = world::Shape::kTriangle; break;
    }
    content.scale = rng.uniform(0.3, 0.8);
    content.position = {rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)};
    world::RenderOptions opts;
    opts.width = opts.height = image_size;
    return world::render(content, world::fill_undefined(meta.style), rng.next_u64(), opts);
}

std::vector<CurvePoint> context_size_curve(const agents::Cohort& cohort,
                                           const std::vector<int>& sizes, int image_size,
                                           double kappa, uint64_t seed) {
    int max_size = *std::max_element(sizes.begin(), sizes.end());
    ProxyModel model = ProxyModel::centroid_model(kappa);
    std::vector<CurvePoint> curve;
    for (int size : sizes) {
        double correct = 0.0;
        long trials = 0;
        for (size_t ai = 0; ai < cohort.agents.size(); ++ai) {
            std::vector<const agents::ImageMeta*> liked, disliked;
            for (const auto& m : cohort.image_meta[ai])
                (m.from_liked ? liked : disliked).push_back(&m);
            if (static_cast<int>(liked.size()) < max_size + 1 ||
                static_cast<int>(disliked.size()) < max_size)
                throw ConfigError("cohort has too few images for context_size_curve");
            std::vector<world::Image> ctx_liked, ctx_disliked;
            for (int i = 0; i < size; ++i) {
                ctx_liked.push_back(render_meta(*liked[static_cast<size_t>(i)], cohort.seed,
                                                image_size));
                ctx_disliked.push_back(render_meta(*disliked[static_cast<size_t>(i)],
                                                   cohort.seed, image_size));
            }
            ContextSet ctx(std::move(ctx_liked), std::move(ctx_disliked));

            // held-out personalized query vs a random other agent's query
            DetRng rng(mix64(mix64(seed, ai), static_cast<uint64_t>(size)));
            world::Image own = render_meta(*liked.back(), cohort.seed, image_size);
            size_t other = rng.below(cohort.agents.size());
            if (other == ai) other = (other + 1) % cohort.agents.size();
            std::vector<const agents::ImageMeta*> other_liked;
            for (const auto& m : cohort.image_meta[other])
                if (m.from_liked) other_liked.push_back(&m);
            world::Image rand_q = render_meta(*other_liked[rng.below(other_liked.size())],
                                              cohort.seed, image_size);
            double s_own = score(model, own, ctx);
            double s_rand = score(model, rand_q, ctx);
            if (s_own > s_rand) correct += 1.0;
            else if (s_own == s_rand) correct += 0.5;
            ++trials;
        }
        curve.push_back({size, trials == 0 ? 0.5 : correct / static_cast<double>(trials), trials});
    }
    return curve;
}

namespace {
constexpr uint64_t kProxyMagic = 0x5047505830303031ull;  // "PGPX0001"
}

void save_proxy(const ProxyModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write proxy checkpoint: " + path);
    auto w64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    auto wf = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    w64(kProxyMagic);
    w64(model.variant == ProxyModel::Variant::kCentroid ? 0 : 1);
    wf(model.kappa);
    w64(model.train_seed);
    w64(static_cast<uint64_t>(model.epochs));
    wf(model.final_loss);
    wf(model.heldout_accuracy);
    w64(static_cast<uint64_t>(model.weights.size()));
    if (model.weights.size() > 0)
        out.write(reinterpret_cast<const char*>(model.weights.data()),
                  static_cast<std::streamsize>(8 * static_cast<size_t>(model.weights.size())));
}

ProxyModel load_proxy(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingCheckpointError("proxy checkpoint not found: " + path);
    auto r64 = [&] {
        uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    auto rf = [&] {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    if (r64() != kProxyMagic) throw MissingCheckpointError("bad proxy checkpoint magic: " + path);
    ProxyModel model;
    model.variant = r64() == 0 ? ProxyModel::Variant::kCentroid : ProxyModel::Variant::kTrained;
    model.kappa = rf();
    model.train_seed = r64();
    model.epochs = static_cast<int>(r64());
    model.final_loss = rf();
    model.heldout_accuracy = rf();
    uint64_t wn = r64();
    if (wn > 4096) throw MissingCheckpointError("corrupt proxy checkpoint: " + path);
    model.weights.resize(static_cast<long>(wn));
    if (wn > 0)
        in.read(reinterpret_cast<char*>(model.weights.data()),
                static_cast<std::streamsize>(8 * wn));
    if (!in) throw MissingCheckpointError("truncated proxy checkpoint: " + path);
    return model;
}

}  // namespace prefgen::proxy
