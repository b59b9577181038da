#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mcev/errors.hpp"

namespace mcev {

/// A posterior sample chain: N rows of m parameters, with per-row
/// log unnormalised-target values (nats) and strictly positive weights.
struct Chain {
    Eigen::MatrixXd parameters;            // N x m
    Eigen::VectorXd log_target;            // length N, ln p-tilde
    Eigen::VectorXd weights;               // length N, all > 0
    std::vector<std::string> param_names;  // optional, length m when present
    std::string model_id;                  // optional

    Eigen::Index size() const { return parameters.rows(); }
    Eigen::Index dim() const { return parameters.cols(); }
    double weight_sum() const { return weights.sum(); }

    void validate() const {
        const Eigen::Index n = size();
        if (n < 2) throw ValidationError("chain needs at least 2 rows, got " + std::to_string(n));
        if (dim() < 1) throw ValidationError("chain needs at least 1 parameter column");
        if (log_target.size() != n || weights.size() != n)
            throw ValidationError("chain field lengths disagree");
        if (!param_names.empty() && static_cast<Eigen::Index>(param_names.size()) != dim())
            throw ValidationError("param_names length does not match dimension");
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < dim(); ++j)
                if (!std::isfinite(parameters(i, j)))
                    throw ValidationError("non-finite parameter at row " + std::to_string(i) +
                                          ", column " + std::to_string(j));
            if (!std::isfinite(log_target[i]))
                throw ValidationError("non-finite log target at row " + std::to_string(i));
            if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
                throw ValidationError("non-positive weight at row " + std::to_string(i));
        }
    }
};

/// Column layout of a text chain file.  The default matches the common
/// convention: column 0 = weight, column 1 = -ln(target), rest = parameters.
struct ColumnSpec {
    std::optional<int> weight_column = 0;  // absent => all weights 1
    int log_target_column = 1;
    bool negate_log_target = true;
    std::vector<int> parameter_columns;    // empty => all remaining columns

    static ColumnSpec standard() { return ColumnSpec{}; }
};

namespace detail {

inline double parse_token(std::string_view tok, std::size_t line_no) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        throw ParseError("line " + std::to_string(line_no) + ": non-numeric token '" +
                         std::string(tok) + "'");
    return v;
}

} // namespace detail

inline Chain parse_chain(std::istream& in, const ColumnSpec& spec = ColumnSpec::standard()) {
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t ncols = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::size_t start = line.find_first_not_of(" \t\r");
        if (start == std::string::npos || line[start] == '#') continue;
        std::vector<double> row;
        std::istringstream ss(line);
        std::string tok;
        while (ss >> tok) row.push_back(detail::parse_token(tok, line_no));
        if (row.empty()) continue;
        if (ncols == 0) ncols = row.size();
        else if (row.size() != ncols)
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(ncols) + " columns, got " + std::to_string(row.size()));
        rows.push_back(std::move(row));
    }
    if (rows.size() < 2)
        throw ValidationError("chain file has " + std::to_string(rows.size()) +
                              " data rows; at least 2 required");

    const int nc = static_cast<int>(ncols);
    auto check_col = [&](int c, const char* what) {
        if (c < 0 || c >= nc)
            throw ValidationError(std::string(what) + " column " + std::to_string(c) +
                                  " out of range for " + std::to_string(nc) + "-column file");
    };
    check_col(spec.log_target_column, "log-target");
    if (spec.weight_column) check_col(*spec.weight_column, "weight");

    std::vector<int> pcols = spec.parameter_columns;
    if (pcols.empty()) {
        for (int c = 0; c < nc; ++c) {
            if (c == spec.log_target_column) continue;
            if (spec.weight_column && c == *spec.weight_column) continue;
            pcols.push_back(c);
        }
    } else {
        for (int c : pcols) {
            check_col(c, "parameter");
            if (c == spec.log_target_column || (spec.weight_column && c == *spec.weight_column))
                throw ValidationError("parameter column " + std::to_string(c) +
                                      " collides with weight/log-target column");
        }
        auto sorted = pcols;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw ValidationError("duplicate parameter column index");
    }
    if (pcols.empty()) throw ValidationError("no parameter columns left after weight/log-target");

    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index m = static_cast<Eigen::Index>(pcols.size());
    Chain chain;
    chain.parameters.resize(n, m);
    chain.log_target.resize(n);
    chain.weights.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        double lt = row[static_cast<std::size_t>(spec.log_target_column)];
        chain.log_target[i] = spec.negate_log_target ? -lt : lt;
        chain.weights[i] = spec.weight_column ? row[static_cast<std::size_t>(*spec.weight_column)] : 1.0;
        for (Eigen::Index j = 0; j < m; ++j)
            chain.parameters(i, j) = row[static_cast<std::size_t>(pcols[static_cast<std::size_t>(j)])];
    }
    chain.validate();
    return chain;
}

/// Re-emit the canonical text form: weight, -ln(target), parameters.
/// parse_chain with the default ColumnSpec round-trips this exactly.
inline void serialize_chain(const Chain& chain, std::ostream& out) {
    out << "# weight  -log_target  parameters[" << chain.dim() << "]\n";
    char buf[32];
    auto put = [&](double v) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        (void)ec;
        out.write(buf, ptr - buf);
    };
    for (Eigen::Index i = 0; i < chain.size(); ++i) {
        put(chain.weights[i]);
        out.put(' ');
        put(-chain.log_target[i]);
        for (Eigen::Index j = 0; j < chain.dim(); ++j) {
            out.put(' ');
            put(chain.parameters(i, j));
        }
        out.put('\n');
    }
}

namespace detail {

inline Chain take_rows(const Chain& chain, const std::vector<Eigen::Index>& idx) {
    Chain out;
    out.parameters.resize(static_cast<Eigen::Index>(idx.size()), chain.dim());
    out.log_target.resize(static_cast<Eigen::Index>(idx.size()));
    out.weights.resize(static_cast<Eigen::Index>(idx.size()));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(idx.size()); ++i) {
        out.parameters.row(i) = chain.parameters.row(idx[static_cast<std::size_t>(i)]);
        out.log_target[i] = chain.log_target[idx[static_cast<std::size_t>(i)]];
        out.weights[i] = chain.weights[idx[static_cast<std::size_t>(i)]];
    }
    out.param_names = chain.param_names;
    out.model_id = chain.model_id;
    return out;
}

} // namespace detail

inline Chain apply_burn_in(const Chain& chain, double fraction) {
    if (!(fraction >= 0.0 && fraction < 1.0))
        throw ValidationError("burn-in fraction must lie in [0,1)");
    const auto drop = static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(chain.size())));
    const Eigen::Index kept = chain.size() - drop;
    if (kept < 2)
        throw ValidationError("burn-in leaves " + std::to_string(kept) + " rows; at least 2 required");
    if (drop == 0) return chain;
    std::vector<Eigen::Index> idx;
    idx.reserve(static_cast<std::size_t>(kept));
    for (Eigen::Index i = drop; i < chain.size(); ++i) idx.push_back(i);
    return detail::take_rows(chain, idx);
}

inline Chain thin(const Chain& chain, std::size_t stride) {
    if (stride < 1) throw ValidationError("thin stride must be >= 1");
    if (stride == 1) return chain;
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < chain.size(); i += static_cast<Eigen::Index>(stride))
        idx.push_back(i);
    if (idx.size() < 2)
        throw ValidationError("thinning by " + std::to_string(stride) + " leaves " +
                              std::to_string(idx.size()) + " rows; at least 2 required");
    return detail::take_rows(chain, idx);
}

/// Merge maximal runs of consecutive rows with bitwise-identical coordinates,
/// summing their weights.  Runs with differing log_target are inconsistent input.
inline Chain compact_duplicates(const Chain& chain) {
    std::vector<Eigen::Index> keep;
    std::vector<double> weight;
    for (Eigen::Index i = 0; i < chain.size(); ++i) {
        if (!keep.empty() && (chain.parameters.row(i).array() ==
                              chain.parameters.row(keep.back()).array()).all()) {
            if (chain.log_target[i] != chain.log_target[keep.back()])
                throw ValidationError("rows " + std::to_string(keep.back()) + " and " +
                                      std::to_string(i) +
                                      " repeat coordinates but disagree on log target");
            weight.back() += chain.weights[i];
        } else {
            keep.push_back(i);
            weight.push_back(chain.weights[i]);
        }
    }
    if (keep.size() == static_cast<std::size_t>(chain.size())) return chain;
    Chain out = detail::take_rows(chain, keep);
    for (Eigen::Index i = 0; i < out.size(); ++i) out.weights[i] = weight[static_cast<std::size_t>(i)];
    out.validate();
    return out;
}

/// Per-parameter integrated autocorrelation time, via the initial-positive-sequence
/// estimator on the weight-expanded chain.  Always >= 1.
inline Eigen::VectorXd integrated_autocorr_time(const Chain& chain) {
    // Expand multiplicity weights; non-integer weights are rounded (min 1).
    std::vector<Eigen::Index> expanded;
    for (Eigen::Index i = 0; i < chain.size(); ++i) {
        auto reps = static_cast<Eigen::Index>(std::max<long long>(1, std::llround(chain.weights[i])));
        for (Eigen::Index r = 0; r < reps; ++r) expanded.push_back(i);
    }
    const auto n = static_cast<Eigen::Index>(expanded.size());
    Eigen::VectorXd tau(chain.dim());
    std::vector<double> x(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < chain.dim(); ++j) {
        double mean = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = chain.parameters(expanded[static_cast<std::size_t>(i)], j);
        for (double v : x) mean += v;
        mean /= static_cast<double>(n);
        for (double& v : x) v -= mean;
        auto gamma = [&](Eigen::Index lag) {
            double s = 0.0;
            for (Eigen::Index i = 0; i + lag < n; ++i)
                s += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i + lag)];
            return s / static_cast<double>(n);
        };
        const double var = gamma(0);
        if (var <= 0.0)
            throw ValidationError("parameter column " + std::to_string(j) +
                                  " is constant; autocorrelation undefined");
        // Geyer initial positive sequence: sum pair terms while they stay positive.
        double sum_pairs = 0.0;
        for (Eigen::Index lag = 0; lag + 1 < n; lag += 2) {
            const double pair = (gamma(lag) + gamma(lag + 1)) / var;
            if (pair <= 0.0) break;
            sum_pairs += pair;
        }
        tau[j] = std::max(1.0, 2.0 * sum_pairs - 1.0);
    }
    return tau;
}

/// Thin stride recommended by the autocorrelation analysis: ceil(max tau).
inline std::size_t suggested_thin_stride(const Chain& chain) {
    const Eigen::VectorXd tau = integrated_autocorr_time(chain);
    return static_cast<std::size_t>(std::ceil(tau.maxCoeff()));
}

} // namespace mcev
