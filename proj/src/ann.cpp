#include "evsnn/ann.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "evsnn/errors.hpp"
#include "evsnn/rng.hpp"

namespace evsnn {

std::string_view to_string(LayerKind kind)
{
    switch (kind)
    {
        case LayerKind::conv: return "conv";
        case LayerKind::maxpool: return "maxpool";
        case LayerKind::dense: return "dense";
    }
    return "?";
}

ArchSpec ArchSpec::steering()
{
    return {{36, 36, 1},
            {LayerSpec::conv(4, 5), LayerSpec::maxpool(2), LayerSpec::conv(4, 5), LayerSpec::maxpool(2),
             LayerSpec::dense(40), LayerSpec::dense(4)}};
}

Shape ArchSpec::input_shape(std::size_t layer) const { return layer == 0 ? input : output_shape(layer - 1); }

Shape ArchSpec::output_shape(std::size_t layer) const
{
    Shape s = input;
    for (std::size_t i = 0; i <= layer; ++i)
    {
        const auto& l = layers[i];
        switch (l.kind)
        {
            case LayerKind::conv: s = {s.height - l.kernel + 1, s.width - l.kernel + 1, l.units}; break;
            case LayerKind::maxpool: s = {s.height / l.pool, s.width / l.pool, s.channels}; break;
            case LayerKind::dense: s = {1, 1, l.units}; break;
        }
    }
    return s;
}

void ArchSpec::validate() const
{
    if (input.height < 1 || input.width < 1 || input.channels < 1)
        throw ConfigError("input shape must be positive");
    if (layers.empty() || layers.back().kind != LayerKind::dense)
        throw ConfigError("the last layer must be dense");
    Shape s = input;
    for (std::size_t i = 0; i < layers.size(); ++i)
    {
        const auto& l = layers[i];
        if (l.kind == LayerKind::conv && (l.units < 1 || l.kernel < 1 || l.kernel > s.height || l.kernel > s.width))
            throw ConfigError("conv layer " + std::to_string(i) + " does not fit its input");
        if (l.kind == LayerKind::maxpool && (l.pool < 1 || l.pool > s.height || l.pool > s.width))
            throw ConfigError("pool layer " + std::to_string(i) + " does not fit its input");
        if (l.kind == LayerKind::maxpool && i > 0 && layers[i - 1].kind == LayerKind::dense)
            throw ConfigError("pool layer " + std::to_string(i) + " cannot follow a dense layer");
        if (l.kind == LayerKind::dense && l.units < 1)
            throw ConfigError("dense layer " + std::to_string(i) + " needs units");
        s = output_shape(i);
    }
}

std::size_t ArchSpec::weight_count(std::size_t layer) const
{
    const auto& l = layers[layer];
    const auto in = input_shape(layer);
    switch (l.kind)
    {
        case LayerKind::conv: return static_cast<std::size_t>(l.kernel) * l.kernel * in.channels * l.units;
        case LayerKind::dense: return static_cast<std::size_t>(in.size()) * l.units;
        case LayerKind::maxpool: return 0;
    }
    return 0;
}

std::size_t ArchSpec::bias_count(std::size_t layer) const
{
    return has_params(layer) ? static_cast<std::size_t>(layers[layer].units) : 0;
}

std::size_t ArchSpec::parameter_count() const
{
    std::size_t n = 0;
    for (std::size_t i = 0; i < layers.size(); ++i)
        n += weight_count(i) + bias_count(i);
    return n;
}

std::size_t ArchSpec::neuron_count() const
{
    std::size_t n = 0;
    for (std::size_t i = 0; i < layers.size(); ++i)
        n += static_cast<std::size_t>(output_shape(i).size());
    return n;
}

std::size_t ArchSpec::mac_count(std::size_t layer) const
{
    const auto& l = layers[layer];
    switch (l.kind)
    {
        case LayerKind::conv: {
            const auto out = output_shape(layer);
            return static_cast<std::size_t>(out.height) * out.width * weight_count(layer);
        }
        case LayerKind::dense: return weight_count(layer);
        case LayerKind::maxpool: return 0;
    }
    return 0;
}

std::size_t ArchSpec::mac_count() const
{
    std::size_t n = 0;
    for (std::size_t i = 0; i < layers.size(); ++i)
        n += mac_count(i);
    return n;
}

std::uint64_t ann_op_count(const ArchSpec& arch) { return 2 * static_cast<std::uint64_t>(arch.mac_count()); }

NetworkParams init_params(const ArchSpec& arch, std::uint64_t seed)
{
    arch.validate();
    NetworkParams p;
    p.arch = arch;
    Rng rng(seed);
    for (std::size_t i = 0; i < arch.layers.size(); ++i)
    {
        LayerParams lp;
        lp.weights.resize(arch.weight_count(i));
        lp.biases.assign(arch.bias_count(i), 0.0);
        if (!lp.weights.empty())
        {
            const auto fan_in = lp.weights.size() / static_cast<std::size_t>(arch.layers[i].units);
            const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
            for (auto& w : lp.weights)
                w = rng.uniform(-limit, limit);
        }
        p.layers.push_back(std::move(lp));
    }
    return p;
}

ParamSet zeros_like(const ParamSet& params)
{
    ParamSet z(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
    {
        z[i].weights.assign(params[i].weights.size(), 0.0);
        z[i].biases.assign(params[i].biases.size(), 0.0);
    }
    return z;
}

int argmax(std::span<const double> values)
{
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[static_cast<std::size_t>(best)])
            best = static_cast<int>(i);
    return best;
}

std::vector<double> to_input(const Frame& frame) { return {frame.cells.begin(), frame.cells.end()}; }

namespace {

struct Workspace
{
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> act;
    std::vector<std::vector<int>> pool_index;  // argmax input index per pooled unit
    std::vector<std::vector<double>> delta;    // dLoss/d(pre) per layer
    std::vector<double> probabilities;

    explicit Workspace(const ArchSpec& arch)
    {
        const auto n = arch.layers.size();
        pre.resize(n);
        act.resize(n);
        pool_index.resize(n);
        delta.resize(n);
        for (std::size_t i = 0; i < n; ++i)
        {
            const auto size = static_cast<std::size_t>(arch.output_shape(i).size());
            pre[i].resize(size);
            act[i].resize(size);
            delta[i].resize(size);
            if (arch.layers[i].kind == LayerKind::maxpool)
                pool_index[i].resize(size);
        }
    }
};

// Accumulates in locals: going through `out` would force a store per tap
// because the compiler cannot rule out aliasing with `w`.
template <int kCout>
void conv_forward_fixed(const Shape& in_s, const Shape& out_s, int k, const double* in, const double* w,
                        const double* b, double* out)
{
    const int cin = in_s.channels;
    for (int oy = 0; oy < out_s.height; ++oy)
        for (int ox = 0; ox < out_s.width; ++ox)
        {
            double acc[kCout];
            for (int co = 0; co < kCout; ++co)
                acc[co] = b[co];
            for (int ky = 0; ky < k; ++ky)
            {
                const double* row = in + ((oy + ky) * in_s.width + ox) * cin;
                const double* wrow = w + ky * k * cin * kCout;
                for (int t = 0; t < k * cin; ++t)
                {
                    // no zero skip: on noisy frames the branch costs more than it saves
                    const double x = row[t];
                    const double* wr = wrow + t * kCout;
                    for (int co = 0; co < kCout; ++co)
                        acc[co] += x * wr[co];
                }
            }
            double* o = out + (oy * out_s.width + ox) * kCout;
            for (int co = 0; co < kCout; ++co)
                o[co] = acc[co];
        }
}

void conv_forward(const Shape& in_s, const Shape& out_s, int k, const double* in, const double* w, const double* b,
                  double* out)
{
    const int cin = in_s.channels, cout = out_s.channels;
    if (cout == 4)
        return conv_forward_fixed<4>(in_s, out_s, k, in, w, b, out);
    std::vector<double> acc(static_cast<std::size_t>(cout));
    for (int oy = 0; oy < out_s.height; ++oy)
        for (int ox = 0; ox < out_s.width; ++ox)
        {
            std::copy(b, b + cout, acc.begin());
            for (int ky = 0; ky < k; ++ky)
            {
                // kx and ci are contiguous in both the input row and the weights
                const double* row = in + ((oy + ky) * in_s.width + ox) * cin;
                const double* wrow = w + ky * k * cin * cout;
                for (int t = 0; t < k * cin; ++t)
                {
                    const double x = row[t];
                    if (x == 0.0)
                        continue;
                    const double* wr = wrow + t * cout;
                    for (int co = 0; co < cout; ++co)
                        acc[static_cast<std::size_t>(co)] += x * wr[co];
                }
            }
            std::copy(acc.begin(), acc.end(), out + (oy * out_s.width + ox) * cout);
        }
}

void conv_backward(const Shape& in_s, const Shape& out_s, int k, const double* in, const double* w,
                   const double* delta, double* dw, double* db, double* d_in)
{
    const int cin = in_s.channels, cout = out_s.channels;
    for (int oy = 0; oy < out_s.height; ++oy)
        for (int ox = 0; ox < out_s.width; ++ox)
        {
            const double* d = delta + (oy * out_s.width + ox) * cout;
            bool any = false;
            for (int co = 0; co < cout; ++co)
            {
                db[co] += d[co];
                any = any || d[co] != 0.0;
            }
            // most positions lose the pool gate, so this skip is well predicted
            if (!any)
                continue;
            for (int ky = 0; ky < k; ++ky)
            {
                const std::size_t ioff = static_cast<std::size_t>(((oy + ky) * in_s.width + ox) * cin);
                const std::size_t woff = static_cast<std::size_t>(ky * k * cin * cout);
                const double* row = in + ioff;
                double* dwrow = dw + woff;
                for (int t = 0; t < k * cin; ++t)
                {
                    const double x = row[t];
                    double* dwr = dwrow + t * cout;
                    for (int co = 0; co < cout; ++co)
                        dwr[co] += x * d[co];
                }
                if (d_in)
                {
                    const double* wrow = w + woff;
                    double* drow = d_in + ioff;
                    for (int t = 0; t < k * cin; ++t)
                    {
                        const double* wr = wrow + t * cout;
                        double s = 0.0;
                        for (int co = 0; co < cout; ++co)
                            s += wr[co] * d[co];
                        drow[t] += s;
                    }
                }
            }
        }
}

void pool_forward(const Shape& in_s, const Shape& out_s, int p, const double* in, double* out, int* index)
{
    const int c_n = in_s.channels;
    for (int oy = 0; oy < out_s.height; ++oy)
        for (int ox = 0; ox < out_s.width; ++ox)
            for (int c = 0; c < c_n; ++c)
            {
                int best = ((oy * p) * in_s.width + ox * p) * c_n + c;
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx)
                    {
                        const int idx = ((oy * p + dy) * in_s.width + ox * p + dx) * c_n + c;
                        if (in[idx] > in[best])
                            best = idx;
                    }
                const int o = (oy * out_s.width + ox) * c_n + c;
                out[o] = in[best];
                index[o] = best;
            }
}

void dense_forward(int n_in, int n_out, const double* in, const double* w, const double* b, double* out)
{
    for (int o = 0; o < n_out; ++o)
        out[o] = b[o];
    for (int i = 0; i < n_in; ++i)
    {
        const double x = in[i];
        if (x == 0.0)
            continue;
        const double* wr = w + static_cast<std::size_t>(i) * n_out;
        for (int o = 0; o < n_out; ++o)
            out[o] += x * wr[o];
    }
}

void dense_backward(int n_in, int n_out, const double* in, const double* w, const double* delta, double* dw,
                    double* db, double* d_in)
{
    for (int o = 0; o < n_out; ++o)
        db[o] += delta[o];
    for (int i = 0; i < n_in; ++i)
    {
        const double x = in[i];
        const double* wr = w + static_cast<std::size_t>(i) * n_out;
        double* dwr = dw + static_cast<std::size_t>(i) * n_out;
        if (x != 0.0)
            for (int o = 0; o < n_out; ++o)
                dwr[o] += x * delta[o];
        if (d_in)
        {
            double s = 0.0;
            for (int o = 0; o < n_out; ++o)
                s += wr[o] * delta[o];
            d_in[i] += s;
        }
    }
}

void run_forward(const NetworkParams& params, const double* input, Workspace& ws)
{
    const auto& arch = params.arch;
    const double* in = input;
    const auto last = arch.layers.size() - 1;
    for (std::size_t i = 0; i < arch.layers.size(); ++i)
    {
        const auto& l = arch.layers[i];
        const auto in_s = arch.input_shape(i);
        const auto out_s = arch.output_shape(i);
        auto& pre = ws.pre[i];
        switch (l.kind)
        {
            case LayerKind::conv:
                conv_forward(in_s, out_s, l.kernel, in, params.layers[i].weights.data(),
                             params.layers[i].biases.data(), pre.data());
                break;
            case LayerKind::dense:
                dense_forward(in_s.size(), out_s.size(), in, params.layers[i].weights.data(),
                              params.layers[i].biases.data(), pre.data());
                break;
            case LayerKind::maxpool: pool_forward(in_s, out_s, l.pool, in, pre.data(), ws.pool_index[i].data()); break;
        }
        auto& act = ws.act[i];
        if (l.kind == LayerKind::maxpool || i == last)
            std::copy(pre.begin(), pre.end(), act.begin());
        else
            for (std::size_t j = 0; j < pre.size(); ++j)
                act[j] = pre[j] > 0.0 ? pre[j] : 0.0;
        in = act.data();
    }

    const auto& logits = ws.act[last];
    for (auto z : logits)
        if (!std::isfinite(z))
            throw NumericError("non-finite logit in forward pass");
    const double top = *std::max_element(logits.begin(), logits.end());
    ws.probabilities.resize(logits.size());
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j)
    {
        ws.probabilities[j] = std::exp(logits[j] - top);
        sum += ws.probabilities[j];
    }
    for (auto& p : ws.probabilities)
        p /= sum;
}

// Cross-entropy of one sample; adds scale * dLoss/dparams into grads.
double accumulate_sample(const NetworkParams& params, const double* input, int label, double scale, Workspace& ws,
                         ParamSet& grads)
{
    run_forward(params, input, ws);
    const auto& arch = params.arch;
    const auto last = arch.layers.size() - 1;
    const auto& logits = ws.act[last];
    const double top = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (auto z : logits)
        lse += std::exp(z - top);
    const double loss = std::log(lse) + top - logits[static_cast<std::size_t>(label)];

    for (std::size_t j = 0; j < logits.size(); ++j)
        ws.delta[last][j] = scale * (ws.probabilities[j] - (static_cast<int>(j) == label ? 1.0 : 0.0));

    for (std::size_t ii = arch.layers.size(); ii-- > 0;)
    {
        const auto& l = arch.layers[ii];
        const auto in_s = arch.input_shape(ii);
        const auto out_s = arch.output_shape(ii);
        const double* in = ii == 0 ? input : ws.act[ii - 1].data();
        double* d_in = nullptr;
        if (ii > 0)
        {
            d_in = ws.delta[ii - 1].data();
            std::fill(ws.delta[ii - 1].begin(), ws.delta[ii - 1].end(), 0.0);
        }
        const auto& d = ws.delta[ii];
        switch (l.kind)
        {
            case LayerKind::conv:
                conv_backward(in_s, out_s, l.kernel, in, params.layers[ii].weights.data(), d.data(),
                              grads[ii].weights.data(), grads[ii].biases.data(), d_in);
                break;
            case LayerKind::dense:
                dense_backward(in_s.size(), out_s.size(), in, params.layers[ii].weights.data(), d.data(),
                               grads[ii].weights.data(), grads[ii].biases.data(), d_in);
                break;
            case LayerKind::maxpool:
                if (d_in)
                    for (std::size_t j = 0; j < d.size(); ++j)
                        d_in[ws.pool_index[ii][j]] += d[j];
                break;
        }
        // ReLU derivative of the layer below (pool and output layers are linear).
        if (ii > 0 && arch.layers[ii - 1].kind != LayerKind::maxpool)
        {
            auto& dd = ws.delta[ii - 1];
            const auto& pre = ws.pre[ii - 1];
            for (std::size_t j = 0; j < dd.size(); ++j)
                if (pre[j] <= 0.0)
                    dd[j] = 0.0;
        }
    }
    return loss;
}

double add_l2(const NetworkParams& params, double l2, ParamSet& grads)
{
    if (l2 == 0.0)
        return 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < params.layers.size(); ++i)
    {
        const auto& lp = params.layers[i];
        for (std::size_t j = 0; j < lp.weights.size(); ++j)
        {
            sum += lp.weights[j] * lp.weights[j];
            grads[i].weights[j] += 2.0 * l2 * lp.weights[j];
        }
        if (!params.use_biases)
            continue;
        for (std::size_t j = 0; j < lp.biases.size(); ++j)
        {
            sum += lp.biases[j] * lp.biases[j];
            grads[i].biases[j] += 2.0 * l2 * lp.biases[j];
        }
    }
    return l2 * sum;
}

void check_input(const NetworkParams& params, std::size_t size)
{
    if (size != static_cast<std::size_t>(params.arch.input.size()))
        throw ConfigError("input has " + std::to_string(size) + " values, network expects " +
                          std::to_string(params.arch.input.size()));
}

}  // namespace

ForwardResult forward(const NetworkParams& params, std::span<const double> input)
{
    check_input(params, input.size());
    Workspace ws(params.arch);
    run_forward(params, input.data(), ws);
    ForwardResult r;
    r.pre = std::move(ws.pre);
    r.activations = std::move(ws.act);
    r.logits = r.activations.back();
    r.probabilities = std::move(ws.probabilities);
    return r;
}

ForwardResult forward(const NetworkParams& params, const Frame& frame) { return forward(params, to_input(frame)); }

ClassLabel predict(const NetworkParams& params, const Frame& frame)
{
    return label_from_index(argmax(forward(params, frame).probabilities));
}

LossGrad loss_grad(const NetworkParams& params, std::span<const std::vector<double>> inputs,
                   std::span<const ClassLabel> labels, double l2)
{
    if (inputs.empty() || inputs.size() != labels.size())
        throw ConfigError("loss_grad needs a non-empty batch with one label per input");
    LossGrad r{0.0, zeros_like(params.layers)};
    Workspace ws(params.arch);
    const double scale = 1.0 / static_cast<double>(inputs.size());
    for (std::size_t s = 0; s < inputs.size(); ++s)
    {
        check_input(params, inputs[s].size());
        r.loss += scale * accumulate_sample(params, inputs[s].data(), index_of(labels[s]), scale, ws, r.gradients);
    }
    r.loss += add_l2(params, l2, r.gradients);
    if (!params.use_biases)
        for (auto& g : r.gradients)
            std::fill(g.biases.begin(), g.biases.end(), 0.0);
    return r;
}

LossGrad loss_grad(const NetworkParams& params, std::span<const LabeledFrame> batch, double l2)
{
    std::vector<std::vector<double>> inputs;
    std::vector<ClassLabel> labels;
    for (const auto& item : batch)
    {
        inputs.push_back(to_input(item.frame));
        labels.push_back(item.label);
    }
    return loss_grad(params, inputs, labels, l2);
}

AdamState AdamState::for_params(const ParamSet& params) { return {zeros_like(params), zeros_like(params), 0}; }

void adam_step(ParamSet& params, const ParamSet& gradients, AdamState& state, const AdamConfig& config)
{
    ++state.step;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t j = 0; j < p.size(); ++j)
        {
            m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
            v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
            const double m_hat = m[j] / c1;
            const double v_hat = v[j] / c2;
            p[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
        }
    };
    for (std::size_t i = 0; i < params.size(); ++i)
    {
        update(params[i].weights, gradients[i].weights, state.m[i].weights, state.v[i].weights);
        update(params[i].biases, gradients[i].biases, state.m[i].biases, state.v[i].biases);
    }
}

double accuracy(const NetworkParams& params, std::span<const LabeledFrame> data)
{
    if (data.empty())
        return 0.0;
    Workspace ws(params.arch);
    std::vector<double> input;
    std::size_t correct = 0;
    for (const auto& item : data)
    {
        input.assign(item.frame.cells.begin(), item.frame.cells.end());
        check_input(params, input.size());
        run_forward(params, input.data(), ws);
        correct += argmax(ws.probabilities) == index_of(item.label);
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(std::span<const LabeledFrame> data, std::span<const LabeledFrame> validation,
                  const ArchSpec& arch, const TrainConfig& config, const EpochCallback& on_epoch)
{
    if (data.empty())
        throw ConfigError("training set is empty");
    if (config.epochs < 1 || config.batch_size < 1 || config.l2 < 0.0)
        throw ConfigError("epochs and batch size must be >= 1 and l2 >= 0");

    TrainResult result;
    result.params = init_params(arch, config.seed);
    result.params.use_biases = config.use_biases;
    auto& params = result.params;
    auto state = AdamState::for_params(params.layers);
    Workspace ws(arch);
    auto grads = zeros_like(params.layers);
    Rng rng(config.seed ^ 0x9E3779B97F4A7C15ull);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> input(static_cast<std::size_t>(arch.input.size()));
    for (int epoch = 1; epoch <= config.epochs; ++epoch)
    {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size))
        {
            const auto end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const double scale = 1.0 / static_cast<double>(end - start);
            for (auto& g : grads)
            {
                std::fill(g.weights.begin(), g.weights.end(), 0.0);
                std::fill(g.biases.begin(), g.biases.end(), 0.0);
            }
            double batch_loss = 0.0;
            for (auto k = start; k < end; ++k)
            {
                const auto& item = data[order[k]];
                check_input(params, item.frame.size());
                std::copy(item.frame.cells.begin(), item.frame.cells.end(), input.begin());
                batch_loss += scale * accumulate_sample(params, input.data(), index_of(item.label), scale, ws, grads);
                correct += argmax(ws.probabilities) == index_of(item.label);
            }
            batch_loss += add_l2(params, config.l2, grads);
            if (!std::isfinite(batch_loss))
                throw NumericError("training loss became non-finite in epoch " + std::to_string(epoch));
            if (!config.use_biases)
                for (auto& g : grads)
                    std::fill(g.biases.begin(), g.biases.end(), 0.0);
            adam_step(params.layers, grads, state, config.adam);
            loss_sum += batch_loss * static_cast<double>(end - start);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = loss_sum / static_cast<double>(data.size());
        stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
        if (!validation.empty())
            stats.val_accuracy = accuracy(params, validation);
        result.history.push_back(stats);
        if (on_epoch)
            on_epoch(stats);
    }
    return result;
}

}  // namespace evsnn
