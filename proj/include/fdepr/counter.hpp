#pragma once

// Cycle-based click detector: each counting cycle fires independently with
// p = 1 - exp(-(rate + dark_rate) * cycle_duration). Sequences use
// independent sub-seeds split from the master seed, so sampling order (or a
// parallel runner) cannot change the outcome of any individual sequence.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "errors.hpp"
#include "fluorescence.hpp"

namespace fdepr {

struct CounterConfig {
    double cycle_duration = 12.0e-6;  // s
    double dark_rate = 0.0;           // counts/s
    double dead_time = 50.0e-6;       // s, first cycle starts here
    double t_rep = 0.0;               // s; 0 means sample to the curve end

    void validate() const {
        if (!(cycle_duration > 0.0))
            throw std::invalid_argument("CounterConfig: cycle_duration must be > 0");
        if (dark_rate < 0.0) throw std::invalid_argument("CounterConfig: dark_rate must be >= 0");
        if (dead_time < 0.0) throw std::invalid_argument("CounterConfig: dead_time must be >= 0");
        if (t_rep < 0.0) throw std::invalid_argument("CounterConfig: t_rep must be >= 0");
    }
};

struct ClickStream {
    int sequence = 0;
    double cycle_duration = 0.0;     // s
    double first_cycle = 0.0;        // s, start of cycle 0 (the dead time)
    std::vector<std::uint8_t> click;
    bool saturated = false;  // some cycle had p > 1/2

    std::size_t cycles() const { return click.size(); }
    double cycle_time(std::size_t i) const { return first_cycle + i * cycle_duration; }
    double extent() const { return cycles() * cycle_duration; }
};

struct CountHistogram {
    std::vector<double> counts;  // per-sequence C_k
    double mean = 0.0;
    double stddev = 0.0;
};

struct RateTrace {
    std::vector<double> time;  // window starts T_j
    std::vector<double> rate;  // averaged counts/s
    double bin_width = 0.0;    // effective T_b (snapped to whole cycles)
};

namespace detail {

/// splitmix64 step: sub-seed k of a master seed. Documented splitting rule so
/// that independently sampled sequences are reproducible in any order.
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t k) {
    std::uint64_t z = master + (k + 1) * 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// uniform double in [0,1) from the top 53 bits (engine-independent mapping)
inline double uniform01(std::mt19937_64& rng) { return (rng() >> 11) * 0x1.0p-53; }

inline double interp_rate(const FluorescenceCurve& curve, double t) {
    const auto& ts = curve.time;
    if (t <= ts.front()) return curve.rate.front();
    if (t >= ts.back()) return curve.rate.back();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const auto k = static_cast<std::size_t>(it - ts.begin()) - 1;
    const double f = (t - ts[k]) / (ts[k + 1] - ts[k]);
    return curve.rate[k] + f * (curve.rate[k + 1] - curve.rate[k]);
}

}  // namespace detail

/// Expected per-cycle click probabilities for a curve (the exact Monte Carlo
/// mean, useful for validating sampled data).
inline std::vector<double> click_probabilities(const FluorescenceCurve& curve,
                                               const CounterConfig& config) {
    config.validate();
    if (curve.time.size() < 2 || curve.time.size() != curve.rate.size())
        throw std::invalid_argument("click_probabilities: malformed curve");
    const double t_end = config.t_rep > 0.0 ? config.t_rep : curve.time.back();
    if (curve.time.front() > config.dead_time || curve.time.back() < t_end * (1.0 - 1e-12))
        throw std::invalid_argument("click_probabilities: curve must cover [T_d, T_rep]");
    std::vector<double> p;
    for (double t = config.dead_time; t + config.cycle_duration <= t_end * (1.0 + 1e-12);
         t += config.cycle_duration) {
        const double rate = detail::interp_rate(curve, t) + config.dark_rate;
        p.push_back(1.0 - std::exp(-rate * config.cycle_duration));
    }
    if (p.empty())
        throw std::invalid_argument("click_probabilities: no counting window before T_rep");
    return p;
}

inline std::vector<ClickStream> sample_clicks(const FluorescenceCurve& curve,
                                              const CounterConfig& config, int n_sequences,
                                              std::uint64_t seed) {
    if (n_sequences < 1) throw std::invalid_argument("sample_clicks: n_sequences must be >= 1");
    const std::vector<double> p = click_probabilities(curve, config);
    bool saturated = false;
    for (const double pi : p) saturated = saturated || pi > 0.5;

    std::vector<ClickStream> streams(n_sequences);
    for (int k = 0; k < n_sequences; ++k) {
        ClickStream& s = streams[k];
        s.sequence = k;
        s.cycle_duration = config.cycle_duration;
        s.first_cycle = config.dead_time;
        s.saturated = saturated;
        s.click.resize(p.size());
        std::mt19937_64 rng(detail::sub_seed(seed, static_cast<std::uint64_t>(k)));
        for (std::size_t i = 0; i < p.size(); ++i)
            s.click[i] = detail::uniform01(rng) < p[i] ? 1 : 0;
    }
    return streams;
}

/// Ensemble-averaged count rate on windows [T_j, T_j + T_b], T_j = T_d + j T_b.
/// T_b is snapped down to a whole number of cycles.
inline RateTrace coarse_grain(const std::vector<ClickStream>& streams, double t_b) {
    if (streams.empty()) throw std::invalid_argument("coarse_grain: no streams");
    const double cycle = streams.front().cycle_duration;
    if (t_b < cycle * (1.0 - 1e-12))
        throw std::invalid_argument("coarse_grain: t_b must be at least one cycle");
    const auto per_bin = static_cast<std::size_t>(t_b / cycle + 1e-9);
    for (const auto& s : streams)
        if (s.cycles() != streams.front().cycles() || s.cycle_duration != cycle)
            throw std::invalid_argument("coarse_grain: streams must share one clock");

    RateTrace trace;
    trace.bin_width = per_bin * cycle;
    const std::size_t n_bins = streams.front().cycles() / per_bin;
    for (std::size_t j = 0; j < n_bins; ++j) {
        double clicks = 0.0;
        for (const auto& s : streams) {
            for (std::size_t i = j * per_bin; i < (j + 1) * per_bin; ++i) clicks += s.click[i];
        }
        trace.time.push_back(streams.front().first_cycle + j * trace.bin_width);
        trace.rate.push_back(clicks / (streams.size() * trace.bin_width));
    }
    return trace;
}

/// Per-sequence counts over [T_d, T_d + t_int] with ensemble mean and
/// (population) standard deviation.
inline CountHistogram count_statistics(const std::vector<ClickStream>& streams, double t_int) {
    if (streams.empty()) throw std::invalid_argument("count_statistics: no streams");
    CountHistogram hist;
    for (const auto& s : streams) {
        if (t_int > s.extent() * (1.0 + 1e-12))
            throw std::invalid_argument("count_statistics: t_int exceeds the stream extent");
        double c = 0.0;
        for (std::size_t i = 0; i < s.cycles(); ++i) {
            if (s.cycle_time(i) - s.first_cycle >= t_int) break;
            c += s.click[i];
        }
        hist.counts.push_back(c);
    }
    double sum = 0.0, sum2 = 0.0;
    for (const double c : hist.counts) {
        sum += c;
        sum2 += c * c;
    }
    const double n = static_cast<double>(hist.counts.size());
    hist.mean = sum / n;
    hist.stddev = std::sqrt(std::max(sum2 / n - hist.mean * hist.mean, 0.0));
    return hist;
}

/// eta N / sqrt(alpha/Gamma_R + eta (1-eta) N)
inline double fd_snr(double n_spins, double gamma_r, double dark_rate, double eta) {
    if (n_spins < 0.0 || gamma_r < 0.0 || dark_rate < 0.0 || eta < 0.0 || eta > 1.0)
        throw std::invalid_argument("fd_snr: bad arguments");
    if (n_spins == 0.0 || eta == 0.0) return 0.0;
    if (dark_rate > 0.0 && gamma_r == 0.0) return 0.0;
    const double noise2 = (gamma_r > 0.0 ? dark_rate / gamma_r : 0.0) + eta * (1.0 - eta) * n_spins;
    if (noise2 == 0.0) return n_spins;  // eta = 1, no dark counts: noiseless
    return eta * n_spins / std::sqrt(noise2);
}

/// N sqrt(2 eta Gamma_R / kappa), echo detection at quantum-limited noise
inline double id_snr(double n_spins, double gamma_r, double kappa, double eta) {
    if (!(kappa > 0.0)) throw std::invalid_argument("id_snr: kappa must be > 0");
    if (n_spins < 0.0 || gamma_r < 0.0 || eta < 0.0 || eta > 1.0)
        throw std::invalid_argument("id_snr: bad arguments");
    return n_spins * std::sqrt(2.0 * eta * gamma_r / kappa);
}

/// sqrt(eta kappa / (2 alpha)): single-spin FD/ID advantage
inline double snr_ratio(double eta, double kappa, double dark_rate) {
    if (!(dark_rate > 0.0)) throw std::invalid_argument("snr_ratio: dark_rate must be > 0");
    if (eta < 0.0 || eta > 1.0 || kappa < 0.0)
        throw std::invalid_argument("snr_ratio: bad arguments");
    return std::sqrt(eta * kappa / (2.0 * dark_rate));
}

// ---------------------------------------------------------------------------
// Persistence

struct ClickFile {
    CounterConfig config;
    std::uint64_t seed = 0;
    std::vector<ClickStream> streams;
};

inline void write_click_streams(const std::string& path, const std::vector<ClickStream>& streams,
                                const CounterConfig& config, std::uint64_t seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("write_click_streams: cannot open " + path);
    const char magic[8] = {'F', 'D', 'C', 'L', 'I', 'C', 'K', '1'};
    out.write(magic, 8);
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    auto put_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    put_u32(static_cast<std::uint32_t>(streams.size()));
    put_f64(config.cycle_duration);
    put_f64(config.dead_time);
    put_f64(config.t_rep);
    put_u64(seed);
    for (const auto& s : streams) {
        put_u32(static_cast<std::uint32_t>(s.sequence));
        put_u32(static_cast<std::uint32_t>(s.cycles()));
        put_f64(s.first_cycle);
        out.put(s.saturated ? 1 : 0);
        std::uint8_t byte = 0;
        for (std::size_t i = 0; i < s.cycles(); ++i) {
            if (s.click[i]) byte |= static_cast<std::uint8_t>(1u << (i % 8));
            if (i % 8 == 7 || i + 1 == s.cycles()) {
                out.put(static_cast<char>(byte));
                byte = 0;
            }
        }
    }
    if (!out) throw ConfigError("write_click_streams: write failed for " + path);
}

inline ClickFile read_click_streams(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("read_click_streams: cannot open " + path);
    char magic[8];
    in.read(magic, 8);
    if (!in || std::string(magic, 8) != "FDCLICK1")
        throw ConfigError("read_click_streams: bad header in " + path);
    auto get_u32 = [&] {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto get_u64 = [&] {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    auto get_f64 = [&] {
        double v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    ClickFile file;
    const std::uint32_t n = get_u32();
    file.config.cycle_duration = get_f64();
    file.config.dead_time = get_f64();
    file.config.t_rep = get_f64();
    file.seed = get_u64();
    for (std::uint32_t k = 0; k < n; ++k) {
        ClickStream s;
        s.sequence = static_cast<int>(get_u32());
        const std::uint32_t cycles = get_u32();
        s.cycle_duration = file.config.cycle_duration;
        s.first_cycle = get_f64();
        s.saturated = in.get() == 1;
        s.click.resize(cycles);
        std::uint8_t byte = 0;
        for (std::uint32_t i = 0; i < cycles; ++i) {
            if (i % 8 == 0) byte = static_cast<std::uint8_t>(in.get());
            s.click[i] = (byte >> (i % 8)) & 1u;
        }
        file.streams.push_back(std::move(s));
    }
    if (!in) throw ConfigError("read_click_streams: truncated file " + path);
    return file;
}

inline void write_click_csv(std::ostream& out, const ClickStream& stream) {
    out << "t_s,click\n";
    char line[64];
    for (std::size_t i = 0; i < stream.cycles(); ++i) {
        std::snprintf(line, sizeof line, "%.9f,%d\n", stream.cycle_time(i),
                      static_cast<int>(stream.click[i]));
        out << line;
    }
}

inline void write_histogram_csv(std::ostream& out, const CountHistogram& hist) {
    out << "counts,probability\n";
    std::vector<std::pair<double, int>> buckets;
    for (const double c : hist.counts) {
        bool found = false;
        for (auto& b : buckets)
            if (b.first == c) {
                ++b.second;
                found = true;
            }
        if (!found) buckets.emplace_back(c, 1);
    }
    std::sort(buckets.begin(), buckets.end());
    char line[64];
    for (const auto& b : buckets) {
        std::snprintf(line, sizeof line, "%.0f,%.8f\n", b.first,
                      static_cast<double>(b.second) / hist.counts.size());
        out << line;
    }
}

}  // namespace fdepr
