#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "msstream/error.hpp"

namespace msstream {

/// Append-only N x T matrix of readings. Stored column-major: appending a
/// time point costs O(N) regardless of how many columns are already held.
class RawPanel {
public:
    RawPanel() = default;

    /// Builds a panel from row-major data (one vector per series).
    static RawPanel from_rows(std::vector<std::string> ids, const std::vector<std::vector<double>>& rows,
                              std::vector<double> timestamps = {}) {
        if (ids.size() != rows.size()) throw ConfigError("series id count does not match row count");
        if (rows.empty()) throw ConfigError("panel needs at least one series");
        const std::size_t t = rows.front().size();
        if (t == 0) throw ConfigError("panel needs at least one time point");
        for (std::size_t n = 0; n < rows.size(); ++n) {
            if (rows[n].size() != t) {
                throw DataError("series '" + ids[n] + "' has " + std::to_string(rows[n].size()) +
                                " readings, expected " + std::to_string(t));
            }
        }
        if (timestamps.empty()) {
            timestamps.resize(t);
            for (std::size_t i = 0; i < t; ++i) timestamps[i] = static_cast<double>(i);
        }
        if (timestamps.size() != t) throw ConfigError("timestamp count does not match column count");

        RawPanel p;
        p.set_ids(std::move(ids));
        p.columns_.assign(t, std::vector<double>(rows.size()));
        for (std::size_t n = 0; n < rows.size(); ++n) {
            for (std::size_t i = 0; i < t; ++i) {
                if (!std::isfinite(rows[n][i])) {
                    throw DataError("non-finite reading in series '" + p.ids_[n] + "' at column " + std::to_string(i));
                }
                p.columns_[i][n] = rows[n][i];
            }
        }
        p.check_timestamps(timestamps);
        p.timestamps_ = std::move(timestamps);
        return p;
    }

    std::size_t n_series() const { return ids_.size(); }
    std::size_t n_times() const { return columns_.size(); }
    bool empty() const { return ids_.empty() || columns_.empty(); }

    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<double>& timestamps() const { return timestamps_; }
    std::span<const double> column(std::size_t t) const { return columns_.at(t); }
    double at(std::size_t series, std::size_t t) const { return columns_[t][series]; }

    std::vector<double> row(std::size_t series) const {
        std::vector<double> out(columns_.size());
        for (std::size_t t = 0; t < columns_.size(); ++t) out[t] = columns_[t][series];
        return out;
    }

    std::optional<std::size_t> index_of(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    /// Retention limit in columns; `std::nullopt` keeps everything.
    std::optional<std::size_t> retention_window;

    /// Non-uniform sampling intervals seen so far (weights stay uniform).
    std::size_t nonuniform_intervals() const { return nonuniform_; }

    void append_column(std::span<const double> values, std::optional<double> ts = std::nullopt) {
        if (values.size() != n_series()) {
            throw DataError("time point has " + std::to_string(values.size()) + " readings, expected " +
                            std::to_string(n_series()));
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i])) throw DataError("non-finite reading at series index " + std::to_string(i));
        }
        const double stamp = next_timestamp(ts);
        columns_.emplace_back(values.begin(), values.end());
        timestamps_.push_back(stamp);
    }

    void erase_column(std::size_t t) {
        if (t >= n_times()) throw ConfigError("time index " + std::to_string(t) + " out of range");
        columns_.erase(columns_.begin() + static_cast<std::ptrdiff_t>(t));
        timestamps_.erase(timestamps_.begin() + static_cast<std::ptrdiff_t>(t));
    }

    void append_row(std::string id, std::span<const double> values) {
        if (index_.count(id)) throw DataError("duplicate series id '" + id + "'");
        if (!columns_.empty() && values.size() != n_times()) {
            throw DataError("series '" + id + "' has " + std::to_string(values.size()) + " readings, expected " +
                            std::to_string(n_times()) + " (full history required)");
        }
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!std::isfinite(values[i])) {
                throw DataError("non-finite reading in series '" + id + "' at column " + std::to_string(i));
            }
        }
        if (columns_.empty()) {
            if (values.empty()) throw DataError("series '" + id + "' has no readings");
            columns_.assign(values.size(), {});
            timestamps_.resize(values.size());
            for (std::size_t i = 0; i < values.size(); ++i) timestamps_[i] = static_cast<double>(i);
        }
        for (std::size_t t = 0; t < values.size(); ++t) columns_[t].push_back(values[t]);
        index_.emplace(id, ids_.size());
        ids_.push_back(std::move(id));
    }

    void erase_row(std::size_t series) {
        if (series >= n_series()) throw ConfigError("series index out of range");
        for (auto& col : columns_) col.erase(col.begin() + static_cast<std::ptrdiff_t>(series));
        ids_.erase(ids_.begin() + static_cast<std::ptrdiff_t>(series));
        rebuild_index();
        if (ids_.empty()) {
            columns_.clear();
            timestamps_.clear();
        }
    }

    /// Applies x -> scale * x + shift to every reading.
    void transform(double scale, double shift) {
        for (auto& col : columns_)
            for (double& x : col) x = scale * x + shift;
    }

    friend bool operator==(const RawPanel& a, const RawPanel& b) {
        return a.ids_ == b.ids_ && a.columns_ == b.columns_ && a.timestamps_ == b.timestamps_;
    }

private:
    void set_ids(std::vector<std::string> ids) {
        ids_ = std::move(ids);
        rebuild_index();
        if (index_.size() != ids_.size()) {
            for (std::size_t i = 0; i < ids_.size(); ++i) {
                if (index_.at(ids_[i]) != i) throw DataError("duplicate series id '" + ids_[i] + "'");
            }
        }
    }

    void rebuild_index() {
        index_.clear();
        for (std::size_t i = 0; i < ids_.size(); ++i) index_.emplace(ids_[i], i);
    }

    void check_timestamps(const std::vector<double>& ts) {
        for (std::size_t i = 1; i < ts.size(); ++i) {
            if (!(ts[i] > ts[i - 1])) throw DataError("timestamps must be strictly increasing (column " + std::to_string(i) + ")");
        }
        if (ts.size() >= 3) {
            const double ref = ts[1] - ts[0];
            for (std::size_t i = 2; i < ts.size(); ++i) {
                if (std::fabs((ts[i] - ts[i - 1]) - ref) > 0.01 * ref) ++nonuniform_;
            }
        }
    }

    double next_timestamp(std::optional<double> ts) {
        if (timestamps_.empty()) return ts.value_or(0.0);
        const double last = timestamps_.back();
        double step = timestamps_.size() >= 2 ? last - timestamps_[timestamps_.size() - 2] : 1.0;
        if (!ts) return last + step;
        if (!(*ts > last)) throw DataError("timestamp " + std::to_string(*ts) + " is not after " + std::to_string(last));
        if (timestamps_.size() >= 2 && std::fabs((*ts - last) - step) > 0.01 * step) ++nonuniform_;
        return *ts;
    }

    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<std::vector<double>> columns_;
    std::vector<double> timestamps_;
    std::size_t nonuniform_ = 0;
};

}  // namespace msstream
