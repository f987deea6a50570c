#include "evsnn/snn.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "evsnn/errors.hpp"
#include "evsnn/rng.hpp"

namespace evsnn {

namespace {

constexpr std::int64_t kNever = std::numeric_limits<std::int64_t>::max();

std::int64_t add(std::int64_t a, std::int64_t b)
{
    std::int64_t r;
    if (__builtin_add_overflow(a, b, &r))
        throw NumericError("membrane potential overflow");
    return r;
}

std::int64_t mul(std::int64_t a, std::int64_t b)
{
    std::int64_t r;
    if (__builtin_mul_overflow(a, b, &r))
        throw NumericError("membrane potential overflow");
    return r;
}

// First tick after t at which V, integrating only drift d, reaches theta.
std::int64_t next_crossing(std::int64_t v, std::int64_t d, std::int64_t theta, std::int64_t t)
{
    const __int128 reach = static_cast<__int128>(v) + d;
    if (reach >= theta)
        return t + 1;
    if (d <= 0)
        return kNever;
    const __int128 gap = static_cast<__int128>(theta) - v;
    const __int128 j = (gap + d - 1) / d;
    if (j >= static_cast<__int128>(kNever - t))
        return kNever;
    return t + static_cast<std::int64_t>(j);
}

bool is_if(const SpikingLayer& l) { return l.kind != LayerKind::maxpool; }

void materialize(SimState& st, std::size_t l, std::size_t n, std::int64_t upto)
{
    auto& tb = st.potential_tick[l][n];
    if (tb == upto)
        return;
    st.potential[l][n] = add(st.potential[l][n], mul(upto - tb, st.drift[l][n]));
    tb = upto;
}

void materialize_all(const SpikingNetwork& net, SimState& st)
{
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        if (is_if(net.layers[l]))
            for (std::size_t n = 0; n < net.layers[l].size(); ++n)
                materialize(st, l, n, st.now);
}

void ensure_schedule(const SpikingNetwork& net, SimState& st)
{
    auto& sc = st.schedule;
    if (sc.valid)
        return;
    materialize_all(net, st);
    const auto nl = net.layers.size();
    sc.next.assign(nl, {});
    sc.heaps.assign(nl, {});
    for (std::size_t l = 0; l < nl; ++l)
    {
        if (!is_if(net.layers[l]))
            continue;
        auto& next = sc.next[l];
        next.resize(net.layers[l].size());
        std::vector<detail::Schedule::Entry> entries;
        for (std::size_t n = 0; n < next.size(); ++n)
        {
            next[n] = next_crossing(st.potential[l][n], st.drift[l][n], net.threshold_fixed, st.now);
            if (next[n] != kNever)
                entries.emplace_back(next[n], static_cast<std::uint32_t>(n));
        }
        sc.heaps[l] = detail::Schedule::Heap(std::greater<>{}, std::move(entries));
    }
    sc.valid = true;
}

// Earliest pending drift crossing over all layers.
std::int64_t earliest(SimState& st)
{
    auto& sc = st.schedule;
    std::int64_t best = kNever;
    for (std::size_t l = 0; l < sc.heaps.size(); ++l)
    {
        auto& h = sc.heaps[l];
        while (!h.empty() && sc.next[l][h.top().second] != h.top().first)
            h.pop();
        if (!h.empty())
            best = std::min(best, h.top().first);
    }
    return best;
}

void record_prediction(const SpikingNetwork& net, SimState& st)
{
    const auto pred = current_prediction(net, st);
    if (st.timeline.empty() || st.timeline.back().prediction != pred)
        st.timeline.push_back({st.now, st.ops, pred});
}

void charge_ticks(SimState& st, std::int64_t upto)
{
    st.ops += st.per_tick_ops * static_cast<std::uint64_t>(upto - st.now);
    st.now = upto;
}

// Index of the window member with the highest spike count; ties to the
// lowest flat index. Window members are visited in increasing index order.
std::size_t gate_winner(const SpikingLayer& pool, const std::vector<std::uint32_t>& in_counts, int uy, int ux, int c)
{
    const auto& in = pool.in;
    std::size_t best = 0;
    std::int64_t best_count = -1;
    for (int dy = 0; dy < pool.pool; ++dy)
        for (int dx = 0; dx < pool.pool; ++dx)
        {
            const auto i = static_cast<std::size_t>(((uy * pool.pool + dy) * in.width + ux * pool.pool + dx) * in.channels + c);
            if (static_cast<std::int64_t>(in_counts[i]) > best_count)
            {
                best_count = in_counts[i];
                best = i;
            }
        }
    return best;
}

// Calls f(target, weight) for every synapse from unit `pre` into layer `l`.
template <typename F>
void for_each_synapse(const SpikingLayer& l, std::uint32_t pre, F&& f)
{
    if (l.kind == LayerKind::dense)
    {
        const auto n_out = l.size();
        const auto* w = l.weights.data() + static_cast<std::size_t>(pre) * n_out;
        for (std::size_t j = 0; j < n_out; ++j)
            f(static_cast<std::uint32_t>(j), w[j]);
        return;
    }
    const int cin = l.in.channels, cout = l.out.channels, k = l.kernel;
    const int c = static_cast<int>(pre) % cin;
    const int px = (static_cast<int>(pre) / cin) % l.in.width;
    const int py = static_cast<int>(pre) / cin / l.in.width;
    for (int ky = 0; ky < k; ++ky)
    {
        const int oy = py - ky;
        if (oy < 0 || oy >= l.out.height)
            continue;
        for (int kx = 0; kx < k; ++kx)
        {
            const int ox = px - kx;
            if (ox < 0 || ox >= l.out.width)
                continue;
            const auto* w = l.weights.data() + static_cast<std::size_t>(((ky * k + kx) * cin + c) * cout);
            const auto base = static_cast<std::uint32_t>((oy * l.out.width + ox) * cout);
            for (int co = 0; co < cout; ++co)
                f(base + static_cast<std::uint32_t>(co), w[co]);
        }
    }
}

// Event-driven processing of one tick. Every pending crossing before `s`
// must already have been handled.
void process_tick(const SpikingNetwork& net, SimState& st, std::int64_t s, std::span<const InputSpike> input)
{
    auto& sc = st.schedule;
    charge_ticks(st, s);

    std::vector<InputSpike> prev(input.begin(), input.end());
    for (const auto& in : input)
    {
        st.ops += static_cast<std::uint64_t>(net.input_fan_out[in.pixel]) * in.count;
        st.input_spikes += in.count;
        if (st.raster)
            for (std::uint32_t r = 0; r < in.count; ++r)
                st.raster->push_back({s, -1, in.pixel});
    }

    std::vector<std::uint32_t> touched;
    std::vector<std::uint32_t> fired;
    bool output_fired = false;
    for (std::size_t l = 0; l < net.layers.size(); ++l)
    {
        const auto& layer = net.layers[l];
        fired.clear();
        if (layer.kind == LayerKind::maxpool)
        {
            const auto& in_counts = st.counts[l - 1];
            for (const auto& p : prev)
            {
                const int c = static_cast<int>(p.pixel) % layer.in.channels;
                const int x = (static_cast<int>(p.pixel) / layer.in.channels) % layer.in.width;
                const int y = static_cast<int>(p.pixel) / layer.in.channels / layer.in.width;
                const int uy = y / layer.pool, ux = x / layer.pool;
                if (uy >= layer.out.height || ux >= layer.out.width)
                    continue;
                if (gate_winner(layer, in_counts, uy, ux, c) != p.pixel)
                    continue;
                const auto u = static_cast<std::uint32_t>((uy * layer.out.width + ux) * layer.out.channels + c);
                if (std::find(fired.begin(), fired.end(), u) == fired.end())
                    fired.push_back(u);
            }
            for (auto u : fired)
            {
                ++st.counts[l][u];
                st.ops += layer.fan_out[u];
            }
        }
        else
        {
            touched.clear();
            auto& mark = st.potential_tick[l];
            // potential_tick == s marks "already touched this tick"
            auto touch = [&](std::uint32_t n) {
                if (mark[n] == s)
                    return;
                materialize(st, l, n, s - 1);
                mark[n] = s;
                touched.push_back(n);
            };
            auto& heap = sc.heaps[l];
            auto& next = sc.next[l];
            while (!heap.empty() && heap.top().first <= s)
            {
                const auto [t, n] = heap.top();
                heap.pop();
                if (next[n] != t)
                    continue;
                if (t < s)
                    throw NumericError("event scheduler skipped a pending crossing");
                touch(n);
            }
            auto& v = st.potential[l];
            for (const auto& p : prev)
                for_each_synapse(layer, p.pixel, [&](std::uint32_t n, std::int64_t w) {
                    touch(n);
                    v[n] = add(v[n], p.count == 1 ? w : mul(w, p.count));
                });
            const auto theta = net.threshold_fixed;
            for (auto n : touched)
            {
                const auto d = st.drift[l][n];
                v[n] = add(v[n], d);
                if (v[n] >= theta)
                {
                    v[n] -= theta;
                    ++st.counts[l][n];
                    st.ops += layer.fan_out[n];
                    fired.push_back(n);
                }
                const auto nt = next_crossing(v[n], d, theta, s);
                if (nt != next[n])
                {
                    next[n] = nt;
                    if (nt != kNever)
                        heap.emplace(nt, n);
                }
            }
            std::sort(fired.begin(), fired.end());
        }
        if (st.raster)
            for (auto n : fired)
                st.raster->push_back({s, static_cast<int>(l), n});
        prev.clear();
        for (auto n : fired)
            prev.push_back({n, 1});
        if (l + 1 == net.layers.size())
            output_fired = !fired.empty();
    }
    if (output_fired)
        record_prediction(net, st);
}

void check_frame(const SpikingNetwork& net, const Frame& frame)
{
    const auto& in = net.params.arch.input;
    if (in.channels != 1 || frame.height != in.height || frame.width != in.width)
        throw ConfigError("frame is " + std::to_string(frame.width) + "x" + std::to_string(frame.height) +
                          ", network expects " + std::to_string(in.width) + "x" + std::to_string(in.height));
    for (auto c : frame.cells)
        if (!(c >= 0.0f && c <= 1.0f))
            throw RangeError("frame values must lie in [0, 1]");
}

}  // namespace

SimState make_state(const SpikingNetwork& net)
{
    SimState st;
    const auto nl = net.layers.size();
    st.potential.resize(nl);
    st.potential_tick.resize(nl);
    st.drift.resize(nl);
    st.counts.resize(nl);
    for (std::size_t l = 0; l < nl; ++l)
    {
        const auto n = net.layers[l].size();
        st.counts[l].assign(n, 0);
        if (is_if(net.layers[l]))
        {
            st.potential[l].assign(n, 0);
            st.potential_tick[l].assign(n, 0);
            st.drift[l].assign(n, 0);
        }
    }
    return st;
}

std::vector<std::vector<std::int64_t>> potentials(const SimState& state)
{
    auto out = state.potential;
    for (std::size_t l = 0; l < out.size(); ++l)
        for (std::size_t n = 0; n < out[l].size(); ++n)
            out[l][n] = add(out[l][n], mul(state.now - state.potential_tick[l][n], state.drift[l][n]));
    return out;
}

bool same_state(const SimState& a, const SimState& b)
{
    return a.now == b.now && a.ops == b.ops && a.counts == b.counts && a.input_spikes == b.input_spikes &&
           a.timeline == b.timeline && a.drift == b.drift && potentials(a) == potentials(b);
}

void set_drive(const SpikingNetwork& net, SimState& state, double bias_scale, std::span<const double> layer0_currents,
               std::uint64_t per_tick_ops)
{
    materialize_all(net, state);
    for (std::size_t l = 0; l < net.layers.size(); ++l)
    {
        if (!is_if(net.layers[l]))
            continue;
        const auto& biases = net.params.layers[l].biases;
        for (std::size_t n = 0; n < net.layers[l].size(); ++n)
            state.drift[l][n] = net.params.use_biases ? to_fixed(biases[n % biases.size()] * bias_scale) : 0;
    }
    if (!layer0_currents.empty())
    {
        if (layer0_currents.size() != net.layers[0].size())
            throw ConfigError("analog currents do not match the first layer");
        for (std::size_t n = 0; n < layer0_currents.size(); ++n)
            state.drift[0][n] = to_fixed(layer0_currents[n]);
    }
    state.per_tick_ops = per_tick_ops;
    state.schedule.valid = false;
}

TickSpikes step(const SpikingNetwork& net, SimState& st, std::span<const InputSpike> input)
{
    materialize_all(net, st);
    st.schedule.valid = false;
    const auto s = st.now + 1;
    st.now = s;
    st.ops += st.per_tick_ops;

    const auto& arch = net.params.arch;
    std::vector<std::int64_t> spikes(static_cast<std::size_t>(arch.input.size()), 0);
    for (const auto& in : input)
    {
        spikes.at(in.pixel) += in.count;
        st.ops += static_cast<std::uint64_t>(net.input_fan_out[in.pixel]) * in.count;
        st.input_spikes += in.count;
        if (st.raster)
            for (std::uint32_t r = 0; r < in.count; ++r)
                st.raster->push_back({s, -1, in.pixel});
    }

    TickSpikes out(net.layers.size());
    const auto theta = net.threshold_fixed;
    for (std::size_t l = 0; l < net.layers.size(); ++l)
    {
        const auto& L = net.layers[l];
        std::vector<std::int64_t> fired(L.size(), 0);
        if (L.kind == LayerKind::maxpool)
        {
            // the unit passes a spike iff its current count leader fired now
            for (int uy = 0; uy < L.out.height; ++uy)
                for (int ux = 0; ux < L.out.width; ++ux)
                    for (int c = 0; c < L.out.channels; ++c)
                    {
                        std::size_t lead = 0;
                        std::int64_t lead_count = -1;
                        for (int dy = 0; dy < L.pool; ++dy)
                            for (int dx = 0; dx < L.pool; ++dx)
                            {
                                const auto i = static_cast<std::size_t>(
                                    ((uy * L.pool + dy) * L.in.width + ux * L.pool + dx) * L.in.channels + c);
                                if (st.counts[l - 1][i] > lead_count)
                                {
                                    lead_count = st.counts[l - 1][i];
                                    lead = i;
                                }
                            }
                        const auto u = static_cast<std::size_t>((uy * L.out.width + ux) * L.out.channels + c);
                        fired[u] = spikes[lead] > 0 ? 1 : 0;
                    }
        }
        else
        {
            for (std::size_t n = 0; n < L.size(); ++n)
            {
                std::int64_t sum = 0;
                if (L.kind == LayerKind::dense)
                {
                    for (std::size_t i = 0; i < spikes.size(); ++i)
                        if (spikes[i])
                            sum = add(sum, mul(spikes[i], L.weights[i * L.size() + n]));
                }
                else
                {
                    const int co = static_cast<int>(n) % L.out.channels;
                    const int ox = (static_cast<int>(n) / L.out.channels) % L.out.width;
                    const int oy = static_cast<int>(n) / L.out.channels / L.out.width;
                    for (int ky = 0; ky < L.kernel; ++ky)
                        for (int kx = 0; kx < L.kernel; ++kx)
                            for (int ci = 0; ci < L.in.channels; ++ci)
                            {
                                const auto i = static_cast<std::size_t>(
                                    ((oy + ky) * L.in.width + ox + kx) * L.in.channels + ci);
                                if (spikes[i])
                                    sum = add(sum, mul(spikes[i], L.weights[static_cast<std::size_t>(
                                                                      ((ky * L.kernel + kx) * L.in.channels + ci) *
                                                                          L.out.channels +
                                                                      co)]));
                            }
                }
                auto& v = st.potential[l][n];
                v = add(add(v, sum), st.drift[l][n]);
                st.potential_tick[l][n] = s;
                if (v >= theta)
                {
                    v -= theta;
                    fired[n] = 1;
                }
            }
        }
        for (std::size_t n = 0; n < L.size(); ++n)
            if (fired[n])
            {
                ++st.counts[l][n];
                st.ops += L.fan_out[n];
                out[l].push_back(static_cast<std::uint32_t>(n));
                if (st.raster)
                    st.raster->push_back({s, static_cast<int>(l), static_cast<std::uint32_t>(n)});
            }
        spikes = std::move(fired);
    }
    if (!out.back().empty())
        record_prediction(net, st);
    return out;
}

void fast_forward(const SpikingNetwork& net, SimState& state, std::int64_t ticks)
{
    if (ticks < 0)
        throw ConfigError("cannot fast-forward a negative number of ticks");
    if (ticks == 0)
        return;
    ensure_schedule(net, state);
    const auto target = state.now + ticks;
    for (;;)
    {
        const auto s = earliest(state);
        if (s > target)
            break;
        process_tick(net, state, s, {});
    }
    charge_ticks(state, target);
}

void inject(const SpikingNetwork& net, SimState& state, std::int64_t tick, std::span<const InputSpike> input)
{
    if (tick <= state.now)
        throw ConfigError("input must be injected after the current tick");
    for (const auto& in : input)
        if (in.pixel >= net.input_fan_out.size())
            throw RangeError("input spike outside the input plane");
    fast_forward(net, state, tick - 1 - state.now);
    ensure_schedule(net, state);
    process_tick(net, state, tick, input);
}

ClassLabel current_prediction(const SpikingNetwork& net, const SimState& state)
{
    const auto last = net.layers.size() - 1;
    const auto& counts = state.counts[last];
    const auto top = std::max_element(counts.begin(), counts.end());
    if (*top > 0)
        return label_from_index(static_cast<int>(top - counts.begin()));
    std::vector<double> v(counts.size());
    for (std::size_t n = 0; n < v.size(); ++n)
        v[n] = static_cast<double>(add(state.potential[last][n],
                                       mul(state.now - state.potential_tick[last][n], state.drift[last][n])));
    return label_from_index(argmax(v));
}

InputDriver make_analog_driver(const Frame& frame, std::int64_t ticks)
{
    if (ticks < 1)
        throw ConfigError("analog run needs at least one tick");
    for (auto c : frame.cells)
        if (!(c >= 0.0f && c <= 1.0f))
            throw RangeError("frame values must lie in [0, 1]");
    return AnalogInput{frame, ticks};
}

InputDriver make_poisson_driver(const Frame& frame, double gain, std::uint64_t seed, std::int64_t ticks)
{
    if (ticks < 1)
        throw ConfigError("poisson run needs at least one tick");
    if (!(gain >= 0.0))
        throw ConfigError("poisson gain must be non-negative");
    for (auto c : frame.cells)
        if (!(c >= 0.0f && c <= 1.0f))
            throw RangeError("frame values must lie in [0, 1]");
    return PoissonInput{frame, gain, seed, ticks};
}

InputDriver make_dvs_driver(const Sample& filtered_sample)
{
    if (filtered_sample.events.empty())
        throw DegenerateSampleError("DVS sample has no events");
    for (const auto& e : filtered_sample.events)
        if (!kSubsampledGeometry.contains(e.x, e.y))
            throw RangeError("DVS sample events must lie on the 36x36 grid");
    return DvsInput{filtered_sample.events};
}

std::string_view to_string(DvsBiasMode mode)
{
    switch (mode)
    {
        case DvsBiasMode::reference: return "reference";
        case DvsBiasMode::count_matched: return "count_matched";
        case DvsBiasMode::unit: return "unit";
    }
    return "?";
}

DvsBiasMode parse_dvs_bias_mode(std::string_view text)
{
    for (auto m : {DvsBiasMode::reference, DvsBiasMode::count_matched, DvsBiasMode::unit})
        if (text == to_string(m))
            return m;
    throw ConfigError("unknown DVS bias mode '" + std::string(text) + "'");
}

std::uint64_t analog_setup_ops(const SpikingNetwork& net) { return 2 * static_cast<std::uint64_t>(net.params.arch.mac_count(0)); }

SampleResult run_sample(const SpikingNetwork& net, const InputDriver& driver, const RunConfig& config)
{
    auto state = make_state(net);
    return run_sample(net, driver, config, state);
}

SampleResult run_sample(const SpikingNetwork& net, const InputDriver& driver, const RunConfig& config, SimState& st)
{
    if (st.counts.size() != net.layers.size())
        st = make_state(net);
    // restart the clock, keep potentials
    materialize_all(net, st);
    for (auto& layer : st.potential_tick)
        std::fill(layer.begin(), layer.end(), 0);
    for (auto& layer : st.counts)
        std::fill(layer.begin(), layer.end(), 0);
    st.now = 0;
    st.ops = 0;
    st.input_spikes = 0;
    st.timeline.clear();
    st.schedule.valid = false;

    SampleResult result;
    st.raster = config.record_raster ? &result.raster : nullptr;

    if (const auto* a = std::get_if<AnalogInput>(&driver))
    {
        check_frame(net, a->frame);
        auto layer0 = net.params;
        if (!layer0.use_biases)
            std::fill(layer0.layers[0].biases.begin(), layer0.layers[0].biases.end(), 0.0);
        const auto currents = forward(layer0, a->frame).pre[0];
        set_drive(net, st, 1.0, currents, net.layers[0].size());
        st.ops = analog_setup_ops(net);
        fast_forward(net, st, a->ticks);
    }
    else if (const auto* p = std::get_if<PoissonInput>(&driver))
    {
        check_frame(net, p->frame);
        set_drive(net, st, 1.0);
        Rng rng(p->seed);
        std::vector<InputSpike> spikes;
        for (std::int64_t t = 1; t <= p->ticks; ++t)
        {
            spikes.clear();
            for (std::size_t i = 0; i < p->frame.cells.size(); ++i)
            {
                const double prob = std::min(1.0, p->gain * p->frame.cells[i]);
                if (prob > 0.0 && rng.bernoulli(prob))
                    spikes.push_back({static_cast<std::uint32_t>(i), 1});
            }
            if (!spikes.empty())
                inject(net, st, t, spikes);
        }
        fast_forward(net, st, p->ticks - st.now);
    }
    else
    {
        const auto& events = std::get<DvsInput>(driver).events;
        if (events.empty())
            throw DegenerateSampleError("DVS sample has no events");
        const auto& in = net.params.arch.input;
        const auto first = events.front().timestamp_us;
        const auto duration = events.back().timestamp_us - first + 1;
        double scale = 1.0;
        if (config.dvs_bias == DvsBiasMode::reference)
            scale = config.reference_ticks / static_cast<double>(duration);
        else if (config.dvs_bias == DvsBiasMode::count_matched)
        {
            std::map<std::uint32_t, std::uint32_t> per_pixel;
            std::uint32_t top = 0;
            for (const auto& e : events)
                top = std::max(top, ++per_pixel[static_cast<std::uint32_t>(e.y * in.width + e.x)]);
            scale = static_cast<double>(top) / static_cast<double>(duration);
        }
        result.bias_scale = scale;
        set_drive(net, st, scale);

        std::map<std::uint32_t, std::uint32_t> group;
        std::vector<InputSpike> spikes;
        for (std::size_t i = 0; i < events.size();)
        {
            const auto ts = events[i].timestamp_us;
            group.clear();
            for (; i < events.size() && events[i].timestamp_us == ts; ++i)
            {
                const auto& e = events[i];
                if (e.x >= in.width || e.y >= in.height)
                    throw RangeError("DVS event outside the network input");
                ++group[static_cast<std::uint32_t>(e.y * in.width + e.x)];
            }
            spikes.clear();
            for (const auto& [pixel, count] : group)
                spikes.push_back({pixel, count});
            inject(net, st, ts - first + 1, spikes);
        }
        fast_forward(net, st, duration - st.now);
    }

    const auto last = net.layers.size() - 1;
    result.prediction = current_prediction(net, st);
    if (st.timeline.empty() || st.timeline.back().prediction != result.prediction)
        st.timeline.push_back({st.now, st.ops, result.prediction});
    result.output_counts = st.counts[last];
    const auto v = potentials(st);
    for (auto x : v[last])
        result.output_potentials.push_back(from_fixed(x));
    for (const auto& c : st.counts)
    {
        std::uint64_t total = 0;
        for (auto x : c)
            total += x;
        result.layer_spikes.push_back(total);
    }
    result.input_spikes = st.input_spikes;
    result.ops = st.ops;
    result.ticks = st.now;
    result.timeline = st.timeline;
    st.raster = nullptr;
    return result;
}

}  // namespace evsnn
