#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include <skillbench/rng.hpp>
#include <skillbench/types.hpp>

namespace skillbench {

enum class Activation { Tanh, Relu };

enum class OutputHead { Linear, TanhSquashedGaussian, CategoricalLogits };

// Fixed-topology MLP description. The forward map is linear in the last
// layer; output heads are applied by consumers (policies, classifiers).
struct NetSpec {
    std::vector<int> layer_sizes;
    Activation hidden_act = Activation::Tanh;
    OutputHead head = OutputHead::Linear;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }

    std::size_t param_count() const
    {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
            n += static_cast<std::size_t>(layer_sizes[l + 1]) * layer_sizes[l] + layer_sizes[l + 1];
        return n;
    }

    void validate() const
    {
        if (layer_sizes.size() < 2)
            throw std::invalid_argument("NetSpec: at least two layers required");
        for (int s : layer_sizes)
            if (s <= 0)
                throw std::invalid_argument("NetSpec: layer sizes must be positive");
        if (head == OutputHead::TanhSquashedGaussian && layer_sizes.back() % 2 != 0)
            throw std::invalid_argument("NetSpec: gaussian head needs even final width (mean | log-std)");
    }

    std::uint64_t hash() const
    {
        std::uint64_t h = 0xcbf29ce484222325ull;
        auto fold = [&h](std::uint64_t v) {
            h ^= v;
            h *= 0x100000001b3ull;
        };
        for (int s : layer_sizes)
            fold(static_cast<std::uint64_t>(s));
        fold(static_cast<std::uint64_t>(hidden_act) + 17);
        fold(static_cast<std::uint64_t>(head) + 101);
        return h;
    }

    bool operator==(const NetSpec& o) const
    {
        return layer_sizes == o.layer_sizes && hidden_act == o.hidden_act && head == o.head;
    }
};

// Flat parameter vector tied to a NetSpec. Layout per layer: W row-major
// (out x in), then bias (out).
struct Genotype {
    std::shared_ptr<const NetSpec> spec;
    Vec params;

    bool compatible_with(const Genotype& o) const { return spec && o.spec && *spec == *o.spec; }
};

inline std::shared_ptr<const NetSpec> make_spec(std::vector<int> sizes, Activation act, OutputHead head)
{
    NetSpec s{std::move(sizes), act, head};
    s.validate();
    return std::make_shared<const NetSpec>(std::move(s));
}

namespace detail {
struct LayerOffsets {
    std::size_t w_off, b_off;
    int in, out;
};

inline std::vector<LayerOffsets> layer_offsets(const NetSpec& spec)
{
    std::vector<LayerOffsets> offs;
    std::size_t p = 0;
    for (int l = 0; l < spec.num_layers(); ++l) {
        const int in = spec.layer_sizes[l];
        const int out = spec.layer_sizes[l + 1];
        offs.push_back({p, p + static_cast<std::size_t>(out) * in, in, out});
        p += static_cast<std::size_t>(out) * in + out;
    }
    return offs;
}

inline Eigen::Map<const Mat> weight(const Vec& params, const LayerOffsets& o)
{
    // stored row-major (out x in); mapped as (in x out) column-major and used transposed
    return Eigen::Map<const Mat>(params.data() + o.w_off, o.in, o.out);
}

inline Eigen::Map<const Vec> bias(const Vec& params, const LayerOffsets& o)
{
    return Eigen::Map<const Vec>(params.data() + o.b_off, o.out);
}

inline Eigen::Map<Mat> weight(Vec& params, const LayerOffsets& o)
{
    return Eigen::Map<Mat>(params.data() + o.w_off, o.in, o.out);
}

inline Eigen::Map<Vec> bias(Vec& params, const LayerOffsets& o)
{
    return Eigen::Map<Vec>(params.data() + o.b_off, o.out);
}
} // namespace detail

/// Random initialization: per layer uniform in +-1/sqrt(fan_in).
inline Genotype init_genotype(std::shared_ptr<const NetSpec> spec, Rng& rng)
{
    Genotype g;
    g.spec = std::move(spec);
    g.params = Vec(g.spec->param_count());
    const auto offs = detail::layer_offsets(*g.spec);
    for (const auto& o : offs) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(o.in));
        for (std::size_t i = o.w_off; i < o.b_off; ++i)
            g.params[static_cast<Eigen::Index>(i)] = rng.uniform(-bound, bound);
        for (int i = 0; i < o.out; ++i)
            g.params[static_cast<Eigen::Index>(o.b_off + i)] = rng.uniform(-bound, bound);
    }
    return g;
}

// Per-layer pre- and post-activation values from a forward pass, kept for
// the backward pass. Column-per-sample; a single sample is a 1-column batch.
struct ForwardCache {
    std::vector<Mat> post; // post[0] = input, post[l+1] = activation output of layer l (final layer: pre-head)
};

inline void forward_batch(const Genotype& g, const Mat& input, Mat& output, ForwardCache* cache = nullptr)
{
    const NetSpec& spec = *g.spec;
    if (input.rows() != spec.input_dim())
        throw std::invalid_argument("forward: input dimension mismatch");
    const auto offs = detail::layer_offsets(spec);
    if (cache) {
        cache->post.clear();
        cache->post.reserve(offs.size() + 1);
        cache->post.push_back(input);
    }
    Mat h = input;
    for (std::size_t l = 0; l < offs.size(); ++l) {
        const auto& o = offs[l];
        Mat z = detail::weight(g.params, o).transpose() * h;
        z.colwise() += detail::bias(g.params, o);
        if (l + 1 < offs.size()) {
            if (spec.hidden_act == Activation::Tanh)
                h = z.array().tanh().matrix();
            else
                h = z.array().max(0.0).matrix();
        } else {
            h = std::move(z);
        }
        if (cache)
            cache->post.push_back(h);
    }
    output = std::move(h);
}

/// Deterministic pre-head output for a single input.
inline Vec forward(const Genotype& g, const Vec& input)
{
    Mat out;
    forward_batch(g, input, out);
    return out.col(0);
}

// Reverse-mode gradients of the forward map. upstream is d(loss)/d(output),
// one column per sample; param gradients are summed over the batch.
inline void backward_batch(const Genotype& g, const ForwardCache& cache, const Mat& upstream,
                           Vec& param_grad, Mat* input_grad = nullptr)
{
    const NetSpec& spec = *g.spec;
    const auto offs = detail::layer_offsets(spec);
    if (upstream.rows() != spec.output_dim())
        throw std::invalid_argument("backward: upstream dimension mismatch");
    if (cache.post.size() != offs.size() + 1)
        throw std::invalid_argument("backward: cache does not match spec");

    param_grad.setZero(static_cast<Eigen::Index>(spec.param_count()));
    Mat delta = upstream; // d loss / d z_l (final layer is linear)
    for (int l = spec.num_layers() - 1; l >= 0; --l) {
        const auto& o = offs[static_cast<std::size_t>(l)];
        const Mat& in_act = cache.post[static_cast<std::size_t>(l)];
        // dW (in x out layout) = in_act * delta^T, db = row-sum of delta
        Eigen::Map<Mat>(param_grad.data() + o.w_off, o.in, o.out).noalias() = in_act * delta.transpose();
        Eigen::Map<Vec>(param_grad.data() + o.b_off, o.out) = delta.rowwise().sum();
        if (l > 0 || input_grad) {
            Mat back = detail::weight(g.params, o) * delta;
            if (l > 0) {
                const Mat& act = cache.post[static_cast<std::size_t>(l)];
                if (spec.hidden_act == Activation::Tanh)
                    delta = (back.array() * (1.0 - act.array().square())).matrix();
                else
                    delta = (back.array() * (act.array() > 0.0).cast<double>()).matrix();
            } else if (input_grad) {
                *input_grad = std::move(back);
            }
        }
    }
}

/// Single-sample convenience wrapper: returns (param_grad, input_grad).
inline std::pair<Vec, Vec> backward(const Genotype& g, const Vec& input, const Vec& upstream)
{
    Mat out;
    ForwardCache cache;
    forward_batch(g, input, out, &cache);
    Vec pgrad;
    Mat igrad;
    backward_batch(g, cache, upstream, pgrad, &igrad);
    return {std::move(pgrad), Vec(igrad.col(0))};
}

// Adam with bias correction. Owns first/second moment buffers matching the
// parameter vector it updates.
struct AdamState {
    std::int64_t step = 0;
    Vec m, v;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(Eigen::Index n = 0, double lr_ = 3e-4) : m(Vec::Zero(n)), v(Vec::Zero(n)), lr(lr_) {}
};

inline void adam_step(AdamState& st, Vec& params, const Vec& grad)
{
    if (grad.size() != params.size())
        throw std::invalid_argument("adam_step: gradient length mismatch");
    if (!grad.allFinite())
        throw std::invalid_argument("adam_step: non-finite gradient");
    if (st.m.size() != params.size()) {
        st.m = Vec::Zero(params.size());
        st.v = Vec::Zero(params.size());
    }
    st.step += 1;
    st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
    st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.array().square().matrix();
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    const double alpha = st.lr / bc1;
    params.array() -= alpha * st.m.array() / ((st.v.array() / bc2).sqrt() + st.eps);
}

} // namespace skillbench
