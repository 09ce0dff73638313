#include "report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

namespace ctxdb::cli {

Record& Report::add(const std::string& kind) {
    rows_.push_back(Record::object());
    rows_.back()["kind"] = kind;
    return rows_.back();
}

namespace {

std::string cell(const Record& v) {
    char buf[64];
    if (v.is_null()) return "-";
    if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    if (v.is_number_float()) {
        const double x = v.get<double>();
        if (x == 0.0 || (std::fabs(x) >= 1e-3 && std::fabs(x) < 1e9)) {
            std::snprintf(buf, sizeof buf, "%.4f", x);
        } else {
            std::snprintf(buf, sizeof buf, "%.3e", x);
        }
        return buf;
    }
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

}  // namespace

void Report::write_table(std::ostream& out) const {
    std::vector<std::string> kinds;
    for (const auto& r : rows_) {
        const auto k = r["kind"].get<std::string>();
        if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);
    }
    bool first = true;
    for (const auto& kind : kinds) {
        std::vector<std::string> cols;
        for (const auto& r : rows_) {
            if (r["kind"] != kind) continue;
            for (const auto& [key, val] : r.items()) {
                if (key != "kind" && std::find(cols.begin(), cols.end(), key) == cols.end()) cols.push_back(key);
            }
        }
        std::vector<std::vector<std::string>> cells;
        std::vector<std::size_t> width(cols.size());
        for (std::size_t c = 0; c < cols.size(); ++c) width[c] = cols[c].size();
        for (const auto& r : rows_) {
            if (r["kind"] != kind) continue;
            auto& line = cells.emplace_back();
            for (std::size_t c = 0; c < cols.size(); ++c) {
                line.push_back(r.contains(cols[c]) ? cell(r[cols[c]]) : "-");
                width[c] = std::max(width[c], line.back().size());
            }
        }
        if (!first) out << '\n';
        first = false;
        out << "# " << command_ << ": " << kind << '\n';
        auto emit = [&](const std::vector<std::string>& line) {
            for (std::size_t c = 0; c < line.size(); ++c) {
                if (c) out << "  ";
                out << std::string(width[c] - line[c].size(), ' ') << line[c];
            }
            out << '\n';
        };
        emit(cols);
        for (const auto& line : cells) emit(line);
    }
}

void Report::write_jsonl(std::ostream& out) const {
    for (const auto& r : rows_) {
        Record line = Record::object();
        line["command"] = command_;
        for (const auto& [key, val] : r.items()) line[key] = val;
        out << line.dump() << '\n';
    }
}

double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / double(xs.size());
}

double percentile(std::vector<double> xs, double p) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * double(xs.size())));
    return xs[std::clamp<std::size_t>(rank, 1, xs.size()) - 1];
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size() || xs.size() < 2) return 0.0;
    const double mx = mean(xs), my = mean(ys);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

double set_recall(std::span<const TokenId> truth, std::span<const TokenId> got) {
    if (truth.empty()) return 1.0;
    std::unordered_set<TokenId> g(got.begin(), got.end());
    std::size_t hit = 0;
    for (TokenId t : truth) hit += g.contains(t);
    return double(hit) / double(truth.size());
}

}  // namespace ctxdb::cli
