#pragma once

#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxdb/core.hpp"

namespace ctxdb::cli {

using Record = nlohmann::ordered_json;

/// Rows grouped by kind. Rendered as one text table per kind and/or as
/// line-delimited JSON (one object per row, "kind" first).
class Report {
public:
    explicit Report(std::string command) : command_(std::move(command)) {}

    Record& add(const std::string& kind);
    const std::vector<Record>& rows() const noexcept { return rows_; }

    void write_table(std::ostream& out) const;
    void write_jsonl(std::ostream& out) const;

private:
    std::string command_;
    std::vector<Record> rows_;
};

// Small helpers for report statistics.
double mean(std::span<const double> xs);
/// Nearest-rank percentile, p in [0, 100].
double percentile(std::vector<double> xs, double p);
double pearson(std::span<const double> xs, std::span<const double> ys);
/// |truth ∩ got| / |truth|; 1 when truth is empty.
double set_recall(std::span<const TokenId> truth, std::span<const TokenId> got);

}  // namespace ctxdb::cli
