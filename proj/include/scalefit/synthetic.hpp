#pragma once

// Datasets drawn from a known scaling law, used as the oracle for parameter
// recovery and bootstrap checks.

#include <cmath>
#include <vector>

#include <fmt/format.h>

#include "scalefit/core.hpp"
#include "scalefit/random.hpp"

namespace scalefit {

struct SyntheticDesign {
    double n_min = 1e7;
    double n_max = 1e10;
    double d_min = 1e9;
    double d_max = 1e12;
    std::size_t n_points = 200;
    double noise_sigma = 0.0;  // std-dev of multiplicative log-normal noise on loss
    bool random_design = false; // log-uniform draws instead of a lattice
    double flop_multiplier = default_flop_multiplier;
};

/// Lattice design: `n_points` = rows * cols with rows ~ sqrt(n_points) on
/// log N and cols on log D, both log-spaced and inclusive of the endpoints.
inline Dataset generate_law_dataset(const ScalingLawParams& law, const SyntheticDesign& design,
                                    std::uint64_t seed) {
    law.validate();
    Rng rng(seed);
    Dataset ds;
    ds.provenance = fmt::format("synthetic(seed={}, n={}, sigma={})", seed, design.n_points,
                                design.noise_sigma);
    const double ln_lo = std::log(design.n_min), ln_hi = std::log(design.n_max);
    const double ld_lo = std::log(design.d_min), ld_hi = std::log(design.d_max);

    std::vector<std::pair<double, double>> nd;
    if (design.random_design) {
        for (std::size_t i = 0; i < design.n_points; ++i)
            nd.emplace_back(std::exp(uniform(rng, ln_lo, ln_hi)), std::exp(uniform(rng, ld_lo, ld_hi)));
    } else {
        std::size_t rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(design.n_points)));
        while (rows > 1 && design.n_points % rows != 0) --rows;
        const std::size_t cols = design.n_points / rows;
        auto at = [](double lo, double hi, std::size_t i, std::size_t k) {
            return k <= 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
        };
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j)
                nd.emplace_back(std::exp(at(ln_lo, ln_hi, i, rows)), std::exp(at(ld_lo, ld_hi, j, cols)));
    }

    for (std::size_t i = 0; i < nd.size(); ++i) {
        const auto [n, d] = nd[i];
        double loss = predict_loss(law, n, d);
        if (design.noise_sigma > 0.0) loss *= std::exp(design.noise_sigma * standard_normal(rng));
        ds.observations.push_back(
            {fmt::format("syn{:04}", i), n, design.flop_multiplier * n * d, d, loss});
    }
    return ds;
}

}  // namespace scalefit
