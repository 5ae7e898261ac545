#include "prefgen/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "prefgen/errors.hpp"

namespace prefgen::diffusion {

namespace {

constexpr int kTimeFeatures = 16;
constexpr int kPoolFactor = 4;  // 4x4 average pooling

int pool_dim(int width, int height) { return 3 * (width / kPoolFactor) * (height / kPoolFactor); }

void time_features(int t, int T, double* out) {
    double tn = static_cast<double>(t) / T;
    for (int i = 0; i < kTimeFeatures / 2; ++i) {
        double arg = tn * 3.14159265358979323846 * std::pow(2.0, i);
        out[2 * i] = std::sin(arg);
        out[2 * i + 1] = std::cos(arg);
    }
}

// average-pool each RGB channel over kPoolFactor blocks
void pool_image(const Tensor& x, int width, int height, double* out) {
    int pw = width / kPoolFactor, ph = height / kPoolFactor;
    for (int c = 0; c < 3; ++c)
        for (int py = 0; py < ph; ++py)
            for (int px = 0; px < pw; ++px) {
                double acc = 0.0;
                for (int dy = 0; dy < kPoolFactor; ++dy)
                    for (int dx = 0; dx < kPoolFactor; ++dx) {
                        int y = py * kPoolFactor + dy, xx = px * kPoolFactor + dx;
                        acc += x[(static_cast<long>(y) * width + xx) * 3 + c];
                    }
                out[(static_cast<long>(c) * ph + py) * pw + px] =
                    acc / (kPoolFactor * kPoolFactor);
            }
}

double silu(double z) { return z / (1.0 + std::exp(-z)); }
double silu_grad(double z) {
    double s = 1.0 / (1.0 + std::exp(-z));
    return s * (1.0 + z * (1.0 - s));
}

}  // namespace

NoiseSchedule make_schedule(int T, double beta_min, double beta_max) {
    if (T < 1) throw ConfigError("schedule T must be >= 1");
    if (!(beta_min > 0.0) || !(beta_max < 1.0) || !(beta_min <= beta_max))
        throw ConfigError("schedule betas must satisfy 0 < beta_min <= beta_max < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    s.sigma.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int t = 1; t <= T; ++t) {
        double b = T == 1 ? beta_min : beta_min + (beta_max - beta_min) * (t - 1) / (T - 1);
        s.beta[static_cast<size_t>(t - 1)] = b;
        s.alpha[static_cast<size_t>(t - 1)] = 1.0 - b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<size_t>(t - 1)] = prod;
        s.sigma[static_cast<size_t>(t - 1)] = std::sqrt(b);
    }
    return s;
}

Tensor forward_noise(const Tensor& x0, int t, const Tensor& z, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.T) throw ConfigError("forward_noise: t out of range");
    if (z.size() != x0.size()) throw ConfigError("forward_noise: z size mismatch");
    double ab = sched.alpha_bar_at(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * z;
}

Eigen::MatrixXd Denoiser::predict_multi(const Tensor& x_t, int t,
                                        const std::vector<const embed::Embedding*>& conds) const {
    Eigen::MatrixXd out(x_t.size(), static_cast<long>(conds.size()));
    for (size_t i = 0; i < conds.size(); ++i) out.col(static_cast<long>(i)) = predict(x_t, t, conds[i]);
    return out;
}

MlpDenoiser::MlpDenoiser(DenoiserParams params) : params_(std::move(params)) {}

Eigen::MatrixXd MlpDenoiser::predict_multi(
    const Tensor& x_t, int t, const std::vector<const embed::Embedding*>& conds) const {
    const DenoiserParams& p = params_;
    if (x_t.size() != p.image_dim())
        throw ConfigError("denoiser input size does not match checkpoint dims");
    if (t < 1 || t > p.T) throw ConfigError("denoiser t out of range");
    const int pd = pool_dim(p.width, p.height);
    const int in_dim = pd + kTimeFeatures + embed::kConditionDim;

    Eigen::VectorXd shared(pd + kTimeFeatures);
    pool_image(x_t, p.width, p.height, shared.data());
    time_features(t, p.T, shared.data() + pd);

    Eigen::MatrixXd in(in_dim, static_cast<long>(conds.size()));
    for (size_t i = 0; i < conds.size(); ++i) {
        in.col(static_cast<long>(i)).head(pd + kTimeFeatures) = shared;
        auto* cond = conds[i];
        if (cond == nullptr) {
            in.col(static_cast<long>(i)).tail(embed::kConditionDim).setZero();
        } else {
            auto cv = cond->condition_vector();
            for (int k = 0; k < embed::kConditionDim; ++k)
                in(pd + kTimeFeatures + k, static_cast<long>(i)) = cv[static_cast<size_t>(k)];
        }
    }

    Eigen::MatrixXd z1 = (p.w1 * in).colwise() + p.b1;
    Eigen::MatrixXd h1 = z1.unaryExpr([](double v) { return silu(v); });
    Eigen::MatrixXd z2 = (p.w2 * h1).colwise() + p.b2;
    Eigen::MatrixXd h2 = z2.unaryExpr([](double v) { return silu(v); });
    Eigen::MatrixXd out = (p.decoder * h2).colwise() + p.out_bias;
    double u = p.skip_scale[t - 1], b = p.skip_bias[t - 1];
    for (long i = 0; i < out.cols(); ++i)
        out.col(i) += u * x_t + Eigen::VectorXd::Constant(x_t.size(), b);
    return out;
}

Tensor MlpDenoiser::predict(const Tensor& x_t, int t, const embed::Embedding* cond) const {
    return predict_multi(x_t, t, {cond}).col(0);
}

namespace {

struct Adam {
    double lr, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    long step = 0;
    std::vector<Eigen::MatrixXd> m, v;

    explicit Adam(double lr_in) : lr(lr_in) {}

    void init(const std::vector<Eigen::MatrixXd*>& params) {
        for (auto* p : params) {
            m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
            v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        }
    }

    void update(const std::vector<Eigen::MatrixXd*>& params,
                const std::vector<Eigen::MatrixXd>& grads) {
        ++step;
        double c1 = 1.0 - std::pow(b1, step);
        double c2 = 1.0 - std::pow(b2, step);
        for (size_t i = 0; i < params.size(); ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * grads[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grads[i].array().square().matrix();
            auto mh = m[i] / c1;
            auto vh = v[i] / c2;
            params[i]->noalias() -=
                lr * (mh.array() / (vh.array().sqrt() + eps)).matrix();
        }
    }
};

}  // namespace

TrainResult train_denoiser(const std::vector<TrainPair>& dataset, const NoiseSchedule& sched,
                           const TrainConfig& cfg) {
    if (dataset.empty()) throw ConfigError("train_denoiser: empty dataset");
    const long D = dataset.front().image.size();
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(D) / 3.0)));
    if (3L * side * side != D) throw ConfigError("train_denoiser: non-square image tensors");

    DenoiserParams p;
    p.width = p.height = side;
    p.T = sched.T;
    p.beta_min = sched.beta.front();
    p.beta_max = sched.beta.back();
    p.hidden1 = cfg.hidden1;
    p.hidden2 = cfg.hidden2;
    p.train_seed = cfg.seed;
    p.epochs = cfg.epochs;

    const int pd = pool_dim(side, side);
    const int in_dim = pd + kTimeFeatures + embed::kConditionDim;
    DetRng rng(mix64(cfg.seed, 0xD1FFull));
    auto init_matrix = [&](long rows, long cols, double scale) {
        Eigen::MatrixXd mat(rows, cols);
        for (long j = 0; j < cols; ++j)
            for (long i = 0; i < rows; ++i) mat(i, j) = scale * rng.normal();
        return mat;
    };
    p.w1 = init_matrix(cfg.hidden1, in_dim, std::sqrt(2.0 / in_dim));
    p.b1 = Eigen::VectorXd::Zero(cfg.hidden1);
    p.w2 = init_matrix(cfg.hidden2, cfg.hidden1, std::sqrt(2.0 / cfg.hidden1));
    p.b2 = Eigen::VectorXd::Zero(cfg.hidden2);
    p.decoder = init_matrix(D, cfg.hidden2, std::sqrt(1.0 / cfg.hidden2));
    p.out_bias = Eigen::VectorXd::Zero(D);
    p.skip_scale = Eigen::VectorXd::Zero(sched.T);
    p.skip_bias = Eigen::VectorXd::Zero(sched.T);

    Adam opt(cfg.lr);
    // vectors live as one-column matrices so the optimizer treats all
    // parameters uniformly
    Eigen::MatrixXd b1m = p.b1, b2m = p.b2, outm = p.out_bias, usm = p.skip_scale,
                    ubm = p.skip_bias;
    std::vector<Eigen::MatrixXd*> all_params = {&p.w1, &p.w2, &p.decoder, &b1m,
                                                &b2m,  &outm, &usm,       &ubm};
    opt.init(all_params);

    std::vector<size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // seeded shuffle
        DetRng erng = rng.fork(static_cast<uint64_t>(epoch) + 17);
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[erng.below(i)]);

        double epoch_loss = 0.0;
        long batches = 0;
        for (size_t start = 0; start + 1 <= order.size(); start += static_cast<size_t>(cfg.batch)) {
            size_t bsz = std::min(static_cast<size_t>(cfg.batch), order.size() - start);
            if (bsz < 2) break;
            const long B = static_cast<long>(bsz);

            Eigen::MatrixXd X(D, B), E(D, B), In(in_dim, B);
            std::vector<int> ts(bsz);
            for (long i = 0; i < B; ++i) {
                const TrainPair& pair = dataset[order[start + static_cast<size_t>(i)]];
                int t = 1 + static_cast<int>(erng.below(static_cast<uint64_t>(sched.T)));
                ts[static_cast<size_t>(i)] = t;
                Tensor z(D);
                for (long k = 0; k < D; ++k) z[k] = erng.normal();
                double ab = sched.alpha_bar_at(t);
                X.col(i) = std::sqrt(ab) * pair.image + std::sqrt(1.0 - ab) * z;
                E.col(i) = z;

                embed::Embedding cond = pair.condition;
                if (erng.uniform() < cfg.cond_dropout) {
                    cond = embed::Embedding{};  // fully unconditional
                } else {
                    if (erng.uniform() < cfg.content_dropout) cond.content.fill(0.0);
                    for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
                        if (erng.uniform() < cfg.channel_dropout) {
                            cond.style_target[static_cast<size_t>(c)] = 0.0;
                            cond.style_defined[static_cast<size_t>(c)] = false;
                        }
                    }
                }
                pool_image(X.col(i), side, side, In.col(i).data());
                time_features(t, sched.T, In.col(i).data() + pd);
                auto cv = cond.condition_vector();
                for (int k = 0; k < embed::kConditionDim; ++k)
                    In(pd + kTimeFeatures + k, i) = cv[static_cast<size_t>(k)];
            }

            Eigen::MatrixXd z1 = (p.w1 * In).colwise() + Eigen::VectorXd(b1m);
            Eigen::MatrixXd h1 = z1.unaryExpr([](double v) { return silu(v); });
            Eigen::MatrixXd z2 = (p.w2 * h1).colwise() + Eigen::VectorXd(b2m);
            Eigen::MatrixXd h2 = z2.unaryExpr([](double v) { return silu(v); });
            Eigen::MatrixXd out = (p.decoder * h2).colwise() + Eigen::VectorXd(outm);
            for (long i = 0; i < B; ++i) {
                int t = ts[static_cast<size_t>(i)];
                out.col(i) += usm(t - 1, 0) * X.col(i);
                out.col(i).array() += ubm(t - 1, 0);
            }

            Eigen::MatrixXd diff = out - E;
            double loss = diff.squaredNorm() / static_cast<double>(D * B);
            if (!std::isfinite(loss))
                throw NumericalError("non-finite training loss at epoch " +
                                     std::to_string(epoch) + " batch " + std::to_string(batches));
            epoch_loss += loss;
            ++batches;

            Eigen::MatrixXd d_out = 2.0 * diff / static_cast<double>(D * B);
            Eigen::MatrixXd g_decoder = d_out * h2.transpose();
            Eigen::MatrixXd g_outb = d_out.rowwise().sum();
            Eigen::MatrixXd g_us_m = Eigen::MatrixXd::Zero(sched.T, 1);
            Eigen::MatrixXd g_ub_m = Eigen::MatrixXd::Zero(sched.T, 1);
            for (long i = 0; i < B; ++i) {
                int t = ts[static_cast<size_t>(i)];
                g_us_m(t - 1, 0) += d_out.col(i).dot(X.col(i));
                g_ub_m(t - 1, 0) += d_out.col(i).sum();
            }
            Eigen::MatrixXd d_h2 = p.decoder.transpose() * d_out;
            Eigen::MatrixXd d_z2 =
                d_h2.array() * z2.unaryExpr([](double v) { return silu_grad(v); }).array();
            Eigen::MatrixXd g_w2_m = d_z2 * h1.transpose();
            Eigen::MatrixXd g_b2_m = d_z2.rowwise().sum();
            Eigen::MatrixXd d_h1 = p.w2.transpose() * d_z2;
            Eigen::MatrixXd d_z1 =
                d_h1.array() * z1.unaryExpr([](double v) { return silu_grad(v); }).array();
            Eigen::MatrixXd g_w1_m = d_z1 * In.transpose();
            Eigen::MatrixXd g_b1_m = d_z1.rowwise().sum();

            opt.update(all_params, {g_w1_m, g_w2_m, g_decoder, g_b1_m, g_b2_m, g_outb,
                                    g_us_m, g_ub_m});
        }
        result.epoch_loss.push_back(epoch_loss / std::max(1L, batches));
    }

    p.b1 = b1m;
    p.b2 = b2m;
    p.out_bias = outm;
    p.skip_scale = usm;
    p.skip_bias = ubm;
    p.final_loss = result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back();
    result.params = std::move(p);
    return result;
}

std::vector<TrainPair> make_training_set(int n, int size, uint64_t seed) {
    std::vector<TrainPair> out;
    out.reserve(static_cast<size_t>(n));
    DetRng rng(mix64(seed, 0xDA7Aull));
    world::RenderOptions opts;
    opts.width = opts.height = size;
    for (int i = 0; i < n; ++i) {
        DetRng r = rng.fork(static_cast<uint64_t>(i));
        world::Content content;
        switch (r.below(3)) {
            case 0: content.shape = world::Shape::kCircle; break;
            case 1: content.shape = world::Shape::kSquare; break;
            default: content.shape = world::Shape::kTriangle; break;
        }
        content.scale = r.uniform(0.3, 0.8);
        content.position = {r.uniform(0.25, 0.75), r.uniform(0.25, 0.75)};
        world::FeatureVector style;
        for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
            style.values[static_cast<size_t>(c)] = r.uniform();
            style.defined[static_cast<size_t>(c)] = true;
        }
        world::Image img = world::render(content, style, r.next_u64(), opts);

        TrainPair pair;
        auto tensor = world::to_tensor(img);
        pair.image = Eigen::Map<const Tensor>(tensor.data(), static_cast<long>(tensor.size()));
        pair.condition.content[static_cast<size_t>(content.shape)] = 1.0;
        pair.condition.content[3] = content.scale;
        pair.condition.content[4] = content.position[0];
        pair.condition.content[5] = content.position[1];
        for (int c = 0; c < taxonomy::kFeatureDim; ++c) {
            pair.condition.style_target[static_cast<size_t>(c)] = style.values[static_cast<size_t>(c)];
            pair.condition.style_defined[static_cast<size_t>(c)] = true;
        }
        double norm2 = 0.0;
        for (int k = 0; k < taxonomy::kResidualDim; ++k) {
            double v = r.normal();
            pair.condition.residual[static_cast<size_t>(k)] = v;
            norm2 += v * v;
        }
        for (auto& v : pair.condition.residual) v /= std::sqrt(norm2);
        out.push_back(std::move(pair));
    }
    return out;
}

Tensor vp_noise(const Tensor& x_t, int t, const embed::Embedding& vp_plus,
                const embed::Embedding& vp_minus, const Denoiser& den) {
    Eigen::MatrixXd both = den.predict_multi(x_t, t, {&vp_plus, &vp_minus});
    return both.col(0) - both.col(1);
}

Tensor guided_noise(const Tensor& x_t, int t, const embed::Embedding& p_emb,
                    const embed::Embedding& vp_plus, const embed::Embedding& vp_minus,
                    const GuidanceConfig& cfg, const Denoiser& den) {
    Eigen::MatrixXd all = den.predict_multi(x_t, t, {nullptr, &p_emb, &vp_plus, &vp_minus});
    double beta = cfg.use_noise_guidance ? cfg.beta : 0.0;
    Tensor eps_vp = all.col(2) - all.col(3);
    return (1.0 - cfg.w) * all.col(0) + cfg.w * (all.col(1) + beta * eps_vp);
}

world::Image sample(const embed::Embedding& prompt_emb_composed, const embed::Embedding& vp_plus,
                    const embed::Embedding& vp_minus, const GuidanceConfig& cfg,
                    const NoiseSchedule& sched, const Denoiser& den, int width, int height,
                    uint64_t seed) {
    const long D = 3L * width * height;
    if (den.dim() != D) throw ConfigError("sampler image dims do not match denoiser");
    DetRng rng(mix64(seed, 0x5A3Dull));
    Tensor x(D);
    for (long i = 0; i < D; ++i) x[i] = rng.normal();

    for (int t = sched.T; t >= 1; --t) {
        Tensor eps = guided_noise(x, t, prompt_emb_composed, vp_plus, vp_minus, cfg, den);
        double a = sched.alpha_at(t);
        double ab = sched.alpha_bar_at(t);
        double coeff = cfg.coefficient_mode == GuidanceConfig::CoefficientMode::kStandardDdpm
                           ? 1.0 / std::sqrt(a)
                           : 1.0 / a;
        x = coeff * (x - ((1.0 - a) / std::sqrt(1.0 - ab)) * eps);
        if (t > 1) {
            double s = sched.sigma_at(t);
            for (long i = 0; i < D; ++i) x[i] += s * rng.normal();
        }
        if (!x.allFinite())
            throw NumericalError("non-finite sampler state at step t=" + std::to_string(t));
    }
    std::vector<double> flat(static_cast<size_t>(D));
    Eigen::Map<Tensor>(flat.data(), D) = x;
    return world::from_tensor(flat, width, height);
}

namespace {

void write_u64(std::ofstream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_i32(std::ofstream& out, int32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ofstream& out, double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_mat(std::ofstream& out, const Eigen::MatrixXd& m) {
    write_i32(out, static_cast<int32_t>(m.rows()));
    write_i32(out, static_cast<int32_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
}
uint64_t read_u64(std::ifstream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
int32_t read_i32(std::ifstream& in) {
    int32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
double read_f64(std::ifstream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
Eigen::MatrixXd read_mat(std::ifstream& in) {
    int32_t rows = read_i32(in), cols = read_i32(in);
    if (rows < 0 || cols < 0 || static_cast<long>(rows) * cols > (1L << 28))
        throw MissingCheckpointError("corrupt checkpoint matrix header");
    Eigen::MatrixXd m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(m.size())));
    return m;
}

constexpr uint64_t kCheckpointMagic = 0x5047444E30303031ull;  // "PGDN0001"

}  // namespace

void save_checkpoint(const DenoiserParams& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    write_u64(out, kCheckpointMagic);
    write_i32(out, p.width);
    write_i32(out, p.height);
    write_i32(out, p.T);
    write_f64(out, p.beta_min);
    write_f64(out, p.beta_max);
    write_i32(out, p.hidden1);
    write_i32(out, p.hidden2);
    write_u64(out, p.train_seed);
    write_i32(out, p.epochs);
    write_f64(out, p.final_loss);
    write_mat(out, p.w1);
    write_mat(out, Eigen::MatrixXd(p.b1));
    write_mat(out, p.w2);
    write_mat(out, Eigen::MatrixXd(p.b2));
    write_mat(out, p.decoder);
    write_mat(out, Eigen::MatrixXd(p.out_bias));
    write_mat(out, Eigen::MatrixXd(p.skip_scale));
    write_mat(out, Eigen::MatrixXd(p.skip_bias));
}

DenoiserParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingCheckpointError("checkpoint not found: " + path);
    if (read_u64(in) != kCheckpointMagic)
        throw MissingCheckpointError("bad checkpoint magic in " + path);
    DenoiserParams p;
    p.width = read_i32(in);
    p.height = read_i32(in);
    p.T = read_i32(in);
    p.beta_min = read_f64(in);
    p.beta_max = read_f64(in);
    p.hidden1 = read_i32(in);
    p.hidden2 = read_i32(in);
    p.train_seed = read_u64(in);
    p.epochs = read_i32(in);
    p.final_loss = read_f64(in);
    p.w1 = read_mat(in);
    p.b1 = read_mat(in);
    p.w2 = read_mat(in);
    p.b2 = read_mat(in);
    p.decoder = read_mat(in);
    p.out_bias = read_mat(in);
    p.skip_scale = read_mat(in);
    p.skip_bias = read_mat(in);
    if (!in) throw MissingCheckpointError("truncated checkpoint: " + path);
    return p;
}

}  // namespace prefgen::diffusion
