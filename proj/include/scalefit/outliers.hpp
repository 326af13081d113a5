#pragma once

#include <limits>

#include "scalefit/core.hpp"

namespace scalefit {

struct OutlierSplit {
    Dataset kept;
    Dataset dropped;
};

/// Partitions runs by tokens-per-parameter: ratio < threshold goes to `dropped`.
/// Order is preserved in both halves.
inline OutlierSplit filter_outliers(const Dataset& data, double threshold) {
    OutlierSplit out;
    out.kept.provenance = data.provenance;
    out.dropped.provenance = data.provenance;
    for (const auto& o : data.observations) {
        if (o.tokens_per_param() < threshold)
            out.dropped.observations.push_back(o);
        else
            out.kept.observations.push_back(o);
    }
    return out;
}

/// The dataset a fit should see under `config`'s outlier policy.
inline Dataset fit_view(const Dataset& data, const FitConfig& config) {
    if (!config.drop_outliers) return data;
    return filter_outliers(data, config.outlier_ratio_threshold).kept;
}

}  // namespace scalefit
