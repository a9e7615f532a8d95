#pragma once

#include <stdexcept>
#include <vector>

#include <skillbench/net.hpp>
#include <skillbench/repertoire.hpp>
#include <skillbench/rng.hpp>

namespace skillbench {

struct VariationConfig {
    double sigma_iso = 0.005;
    double sigma_line = 0.05;
    int batch_size = 1000;
};

/// count uniform draws (with replacement) over the occupied cells.
inline std::vector<int> select_uniform(const CvtRepertoire& rep, int count, Rng& rng)
{
    const std::vector<int> occupied = rep.occupied_cells();
    if (occupied.empty())
        throw std::runtime_error("select_uniform: empty repertoire");
    std::vector<int> out(static_cast<std::size_t>(count));
    for (auto& c : out)
        c = occupied[rng.uniform_int(occupied.size())];
    return out;
}

/// child = x1 + sigma_iso * eps + sigma_line * delta * (x2 - x1), with eps
/// per-coordinate standard normal and delta a single shared scalar.
inline Genotype iso_line_dd(const Genotype& x1, const Genotype& x2, const VariationConfig& cfg, Rng& rng)
{
    if (!x1.compatible_with(x2))
        throw std::invalid_argument("iso_line_dd: parent spec mismatch");
    Genotype child;
    child.spec = x1.spec;
    child.params = x1.params;
    const double delta = rng.normal();
    for (Eigen::Index i = 0; i < child.params.size(); ++i)
        child.params[i] += cfg.sigma_iso * rng.normal() + cfg.sigma_line * delta * (x2.params[i] - x1.params[i]);
    return child;
}

} // namespace skillbench
