#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ctxdb/attention.hpp"
#include "ctxdb/dipr.hpp"
#include "ctxdb/filter.hpp"
#include "ctxdb/graph.hpp"
#include "ctxdb/index.hpp"
#include "ctxdb/planner.hpp"
#include "ctxdb/store.hpp"
#include "ctxdb/vfs.hpp"

namespace py = pybind11;
using namespace ctxdb;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Vector to_vector(const FloatArray& a) {
    if (a.ndim() != 1) throw Error("expected a 1-d array");
    return Vector(std::span<const float>(a.data(), static_cast<std::size_t>(a.shape(0))));
}

VectorSet to_set(const FloatArray& a) {
    if (a.ndim() != 2) throw Error("expected a 2-d array");
    const auto n = static_cast<std::size_t>(a.shape(0)), d = static_cast<std::size_t>(a.shape(1));
    return VectorSet(d, std::vector<float>(a.data(), a.data() + n * d));
}

std::shared_ptr<const VectorSet> share(const FloatArray& a) { return std::make_shared<const VectorSet>(to_set(a)); }

py::array_t<float> to_numpy(const Vector& v) {
    py::array_t<float> out(static_cast<py::ssize_t>(v.dim()));
    std::copy(v.values().begin(), v.values().end(), out.mutable_data());
    return out;
}

py::array_t<float> to_numpy(const VectorSet& s) {
    py::array_t<float> out({static_cast<py::ssize_t>(s.size()), static_cast<py::ssize_t>(s.dim())});
    std::copy(s.flat().begin(), s.flat().end(), out.mutable_data());
    return out;
}

TwoHopMode parse_two_hop(const std::string& s) {
    if (s == "adaptive") return TwoHopMode::Adaptive;
    if (s == "always") return TwoHopMode::Always;
    throw Error("two_hop must be 'adaptive' or 'always'");
}

// (layers, kv_heads, n, d) array -> per-head sets, layer-major
KVCache to_cache(const FloatArray& keys, const FloatArray& values, std::size_t n_query_heads) {
    if (keys.ndim() != 4 || values.ndim() != 4) throw Error("keys and values must be (layers, kv_heads, tokens, dim)");
    for (int i = 0; i < 4; ++i) {
        if (keys.shape(i) != values.shape(i)) throw Error("keys and values differ in shape");
    }
    ModelShape shape{static_cast<std::size_t>(keys.shape(0)), n_query_heads, static_cast<std::size_t>(keys.shape(1)),
                     static_cast<std::size_t>(keys.shape(3))};
    if (shape.n_query_heads == 0) shape.n_query_heads = shape.n_kv_heads;
    KVCache kv = KVCache::empty_for(shape);
    const auto n = static_cast<std::size_t>(keys.shape(2)), d = shape.dim;
    for (std::size_t l = 0; l < shape.n_layers; ++l) {
        for (std::size_t h = 0; h < shape.n_kv_heads; ++h) {
            const std::size_t off = (l * shape.n_kv_heads + h) * n * d;
            kv.at(l, h).keys = std::make_shared<const VectorSet>(
                d, std::vector<float>(keys.data() + off, keys.data() + off + n * d));
            kv.at(l, h).values = std::make_shared<const VectorSet>(
                d, std::vector<float>(values.data() + off, values.data() + off + n * d));
        }
    }
    return kv;
}

std::vector<Vector> rows(const FloatArray& a) {
    const auto s = to_set(a);
    std::vector<Vector> out;
    for (std::size_t i = 0; i < s.size(); ++i) out.push_back(s.vector(i));
    return out;
}

}  // namespace

PYBIND11_MODULE(_ctxdb, m) {
    m.doc() = "KV-cache retrieval engine";
    py::register_exception<Error>(m, "Error", PyExc_ValueError);

    m.def("alpha_to_beta", &alpha_to_beta, py::arg("alpha"), py::arg("dim"));
    m.def("beta_to_alpha", &beta_to_alpha, py::arg("beta"), py::arg("dim"));

    m.def(
        "full_attention",
        [](const FloatArray& q, const FloatArray& k, const FloatArray& v) {
            return to_numpy(full_attention(to_vector(q), to_set(k), to_set(v)).o);
        },
        py::arg("q"), py::arg("keys"), py::arg("values"));
    m.def(
        "sparse_attention",
        [](const FloatArray& q, const FloatArray& k, const FloatArray& v, const std::vector<TokenId>& ids) {
            return to_numpy(sparse_attention(to_vector(q), to_set(k), to_set(v), ids).o);
        },
        py::arg("q"), py::arg("keys"), py::arg("values"), py::arg("selected"));
    m.def(
        "recovery_ratio",
        [](const FloatArray& q, const FloatArray& k, const std::vector<TokenId>& ids) {
            return recovery_ratio(to_vector(q), to_set(k), ids);
        },
        py::arg("q"), py::arg("keys"), py::arg("selected"));
    m.def(
        "tokens_for_recovery",
        [](const FloatArray& q, const FloatArray& k, double target) {
            return tokens_for_recovery(to_vector(q), to_set(k), target);
        },
        py::arg("q"), py::arg("keys"), py::arg("target"));

    m.def(
        "dipr_bruteforce",
        [](const FloatArray& q, const FloatArray& k, double beta, std::optional<std::size_t> limit) {
            return dipr_bruteforce(to_vector(q), to_set(k), beta, limit);
        },
        py::arg("q"), py::arg("keys"), py::arg("beta"), py::arg("limit") = py::none());
    m.def(
        "flat_topk",
        [](const FloatArray& q, const FloatArray& k, std::size_t top, std::optional<std::size_t> limit) {
            return flat_topk(FlatIndex(share(k)), to_vector(q), top, limit);
        },
        py::arg("q"), py::arg("keys"), py::arg("k"), py::arg("limit") = py::none());

    py::class_<GraphIndex>(m, "GraphIndex")
        .def_property_readonly("size", &GraphIndex::size)
        .def_property_readonly("max_degree", &GraphIndex::max_degree)
        .def_property_readonly("entry_point", &GraphIndex::entry_point)
        .def_property_readonly("memory_bytes", &GraphIndex::memory_bytes)
        .def("neighbors",
             [](const GraphIndex& g, TokenId node) {
                 if (node >= g.size()) throw Error("node out of range");
                 const auto nb = g.neighbors(node);
                 return std::vector<TokenId>(nb.begin(), nb.end());
             })
        .def("fully_reachable", &GraphIndex::fully_reachable)
        .def(
            "diprs",
            [](const GraphIndex& g, const FloatArray& q, std::size_t l0, double beta) {
                return diprs(g, to_vector(q), g.entry_point(), l0, beta).ids;
            },
            py::arg("q"), py::arg("l0"), py::arg("beta"))
        .def(
            "filtered_diprs",
            [](const GraphIndex& g, const FloatArray& q, std::size_t prefix_len, std::size_t l0, double beta,
               const std::string& two_hop) {
                FilterOptions opt;
                opt.two_hop = parse_two_hop(two_hop);
                return filtered_diprs(g, to_vector(q), {prefix_len}, l0, beta, opt).ids;
            },
            py::arg("q"), py::arg("prefix_len"), py::arg("l0"), py::arg("beta"), py::arg("two_hop") = "adaptive")
        .def(
            "topk", [](const GraphIndex& g, const FloatArray& q, std::size_t k, std::size_t ef) {
                return graph_topk(g, to_vector(q), k, ef);
            },
            py::arg("q"), py::arg("k"), py::arg("ef") = 64);

    m.def(
        "build_graph",
        [](const FloatArray& keys, std::optional<FloatArray> queries, std::size_t max_degree, std::size_t knn_k,
           std::size_t enhance_ef, std::size_t threads) {
            GraphParams p;
            p.max_degree = max_degree;
            p.knn_k = knn_k;
            p.enhance_ef = enhance_ef;
            p.threads = threads;
            auto k = share(keys);
            VectorSet qs = queries ? to_set(*queries) : VectorSet(k->dim());
            py::gil_scoped_release release;
            return build_graph(std::move(k), qs, p);
        },
        py::arg("keys"), py::arg("queries") = py::none(), py::arg("max_degree") = 32, py::arg("knn_k") = 32,
        py::arg("enhance_ef") = 64, py::arg("threads") = 1);

    m.def(
        "plan",
        [](std::size_t context_len, std::size_t budget, std::size_t layer, std::optional<std::size_t> prefix,
           std::size_t dim, double beta) {
            PlanRequest r;
            r.context_len = context_len;
            r.memory_budget_bytes = budget;
            r.layer = layer;
            r.reused_prefix_len = prefix;
            r.shape.dim = dim;
            PlannerConfig cfg;
            cfg.beta = beta;
            const auto p = plan(r, cfg);
            py::dict d;
            d["query"] = to_string(p.query);
            d["index"] = to_string(p.index);
            d["k"] = p.k;
            d["beta"] = p.beta;
            d["prefix_len"] = p.prefix_len ? py::cast(*p.prefix_len) : py::none();
            return d;
        },
        py::arg("context_len"), py::arg("memory_budget_bytes"), py::arg("layer") = 0,
        py::arg("reused_prefix_len") = py::none(), py::arg("dim") = 128, py::arg("beta") = 12.0);

    m.def(
        "write_vector_file",
        [](const std::filesystem::path& path, const FloatArray& vectors, std::uint32_t elem_bits) {
            vfs::WriteOptions opt;
            opt.elem_bits = elem_bits;
            opt.dim = vectors.ndim() == 2 ? static_cast<std::size_t>(vectors.shape(1)) : 0;
            vfs::write_vector_file(path, to_set(vectors), nullptr, opt);
        },
        py::arg("path"), py::arg("vectors"), py::arg("elem_bits") = 32);
    m.def(
        "read_vector_file",
        [](const std::filesystem::path& path) { return to_numpy(vfs::VectorFile(path).read_vectors()); },
        py::arg("path"));

    py::class_<Session>(m, "Session")
        .def_property_readonly("prefix_len", &Session::prefix_len)
        .def_property_readonly("base_id", &Session::base_id)
        .def("window_length", &Session::window_length, py::arg("layer"))
        .def(
            "update",
            [](Session& s, std::size_t layer, const FloatArray& k, const FloatArray& v) {
                const auto ks = rows(k), vs = rows(v);
                return s.update(layer, ks, vs).front().length();
            },
            py::arg("layer"), py::arg("k"), py::arg("v"),
            "Append one token: k and v are (kv_heads, dim). Returns the logical length.")
        .def("append_token_ids", [](Session& s, const std::vector<VocabToken>& ids) { s.append_token_ids(ids); })
        .def(
            "attention",
            [](const Session& s, std::size_t layer, const FloatArray& q) {
                const auto qs = rows(q);
                const auto r = s.attention(layer, qs);
                VectorSet out(s.shape().dim);
                for (const auto& o : r.outputs) out.push_back(o);
                return py::make_tuple(to_numpy(out), r.selected);
            },
            py::arg("layer"), py::arg("q"),
            "q is (query_heads, dim). Returns (outputs, selected token ids per head).")
        .def(
            "plan",
            [](const Session& s, std::size_t layer) {
                const auto& p = s.plan(layer);
                return py::make_tuple(to_string(p.query), to_string(p.index));
            },
            py::arg("layer"));

    py::class_<DB>(m, "DB")
        .def(py::init([](std::optional<std::filesystem::path> root, std::size_t l0, double beta,
                         std::size_t short_context_threshold, const std::string& two_hop) {
                 StoreConfig c;
                 c.l0 = l0;
                 c.planner.beta = beta;
                 c.planner.short_context_threshold = short_context_threshold;
                 c.filter.two_hop = parse_two_hop(two_hop);
                 return std::make_unique<DB>(c, root);
             }),
             py::arg("root") = py::none(), py::arg("l0") = 128, py::arg("beta") = 12.0,
             py::arg("short_context_threshold") = 1024, py::arg("two_hop") = "adaptive")
        .def(
            "import_context",
            [](DB& db, const std::vector<VocabToken>& tokens, const FloatArray& keys, const FloatArray& values,
               std::size_t n_query_heads) {
                auto kv = to_cache(keys, values, n_query_heads);
                py::gil_scoped_release release;
                return db.import_context(tokens, std::move(kv));
            },
            py::arg("token_ids"), py::arg("keys"), py::arg("values"), py::arg("query_heads") = 0,
            "keys and values are (layers, kv_heads, tokens, dim).")
        .def(
            "create_session",
            [](const DB& db, const std::vector<VocabToken>& tokens) {
                auto [s, rest] = db.create_session(tokens);
                return py::make_tuple(std::move(s), rest);
            },
            py::arg("token_ids"))
        .def("store", [](DB& db, const Session& s) { return db.store(s); }, py::arg("session"))
        .def("context_ids", &DB::context_ids)
        .def("context_length", [](const DB& db, ContextId id) { return db.context(id)->length(); })
        .def("context_token_ids", [](const DB& db, ContextId id) { return db.context(id)->token_ids; })
        .def(
            "read_keys",
            [](const DB& db, ContextId id, std::size_t layer, std::size_t kv_head) {
                return to_numpy(db.read_persisted(id, layer, kv_head, vfs::Role::Key));
            },
            py::arg("context_id"), py::arg("layer"), py::arg("kv_head"));
}
