#pragma once

// JSON documents for every persisted artifact. Doubles are written in
// shortest round-trip form, so weights reload bit-exactly.

#include <hybridcast/error.hpp>
#include <hybridcast/gbtree.hpp>
#include <hybridcast/lstm.hpp>
#include <hybridcast/market_data.hpp>
#include <hybridcast/pipeline.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

namespace hybridcast {

using json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

/// 64-bit FNV-1a of a byte string, as 16 hex digits. Used as a data
/// fingerprint, not for security.
inline std::string fingerprint(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, std::string_view content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("write failed for " + p.string());
}

inline json load_json(const std::filesystem::path& p) {
    try {
        return json::parse(read_file(p));
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in " + p.string() + ": " + e.what());
    }
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

namespace detail {

inline void expect_format(const json& j, std::string_view format) {
    if (!j.is_object() || j.value("format", std::string{}) != format) {
        throw IoError("expected a '" + std::string(format) + "' document");
    }
    if (j.value("version", 0) != kFormatVersion) {
        throw IoError("unsupported " + std::string(format) + " version " + std::to_string(j.value("version", 0)));
    }
}

template <typename F>
auto guarded(std::string_view what, F&& f) {
    try {
        return f();
    } catch (const json::exception& e) {
        throw IoError("malformed " + std::string(what) + ": " + e.what());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Building blocks

inline json to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.data().begin(), m.data().end())}};
}

inline Matrix matrix_from_json(const json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<double>>());
}

inline json to_json(const data::ScalerState& s) {
    return json{{"format", "hybridcast.scaler"}, {"version", kFormatVersion}, {"features", s.feature_names},
                {"min", s.min},                  {"max", s.max}};
}

inline data::ScalerState scaler_from_json(const json& j) {
    return detail::guarded("scaler", [&] {
        detail::expect_format(j, "hybridcast.scaler");
        data::ScalerState s;
        s.feature_names = j.at("features").get<std::vector<std::string>>();
        s.min = j.at("min").get<Vector>();
        s.max = j.at("max").get<Vector>();
        if (s.min.size() != s.max.size()) throw IoError("scaler min/max lengths differ");
        return s;
    });
}

// ---------------------------------------------------------------------------
// LSTM

/// Layout: `hidden_size`, `input_size`, then one object per gate (`forget`,
/// `input`, `candidate`, `output`) holding `weights` (hidden x (hidden+input),
/// row-major, first `hidden` columns act on h_{t-1}) and `bias`.
inline json to_json(const lstm::LstmParams& p) {
    json j{{"format", "hybridcast.lstm"}, {"version", kFormatVersion}, {"hidden_size", p.hidden},
           {"input_size", p.input}};
    const auto gates = p.gates();
    for (std::size_t i = 0; i < gates.size(); ++i) {
        j[lstm::LstmParams::gate_name(i)] = json{{"weights", to_json(gates[i]->weights)}, {"bias", gates[i]->bias}};
    }
    return j;
}

inline lstm::LstmParams lstm_from_json(const json& j) {
    return detail::guarded("LSTM parameters", [&] {
        detail::expect_format(j, "hybridcast.lstm");
        lstm::LstmParams p;
        p.hidden = j.at("hidden_size").get<std::size_t>();
        p.input = j.at("input_size").get<std::size_t>();
        auto gates = p.gates();
        for (std::size_t i = 0; i < gates.size(); ++i) {
            const json& g = j.at(lstm::LstmParams::gate_name(i));
            gates[i]->weights = matrix_from_json(g.at("weights"));
            gates[i]->bias = g.at("bias").get<Vector>();
        }
        p.validate();
        return p;
    });
}

inline json to_json(const lstm::LinearHead& h) {
    return json{{"format", "hybridcast.linear_head"}, {"version", kFormatVersion}, {"weights", to_json(h.weights)},
                {"bias", h.bias}};
}

inline lstm::LinearHead head_from_json(const json& j) {
    return detail::guarded("linear head", [&] {
        detail::expect_format(j, "hybridcast.linear_head");
        lstm::LinearHead h{matrix_from_json(j.at("weights")), j.at("bias").get<Vector>()};
        if (h.bias.size() != h.weights.rows()) throw IoError("linear head bias length mismatch");
        return h;
    });
}

// ---------------------------------------------------------------------------
// Boosters

inline json to_json(const gbt::TreeParams& p) {
    return json{{"lambda", p.lambda},
                {"gamma", p.gamma},
                {"max_depth", p.max_depth},
                {"min_samples_leaf", p.min_samples_leaf},
                {"learning_rate", p.learning_rate}};
}

inline gbt::TreeParams tree_params_from_json(const json& j) {
    gbt::TreeParams p;
    p.lambda = j.at("lambda").get<double>();
    p.gamma = j.at("gamma").get<double>();
    p.max_depth = j.at("max_depth").get<std::size_t>();
    p.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    p.learning_rate = j.at("learning_rate").get<double>();
    return p;
}

/// Trees are node arrays (root first). Internal nodes carry `feature`,
/// `threshold`, `left`, `right`; leaves carry `weight`.
inline json to_json(const gbt::Booster& b) {
    json trees = json::array();
    for (const auto& t : b.trees) {
        json nodes = json::array();
        for (const auto& n : t.nodes()) {
            if (n.leaf) {
                nodes.push_back(json{{"leaf", true}, {"weight", n.weight}});
            } else {
                nodes.push_back(json{{"leaf", false},
                                     {"feature", n.feature},
                                     {"threshold", n.threshold},
                                     {"left", n.left},
                                     {"right", n.right},
                                     {"gain", n.gain}});
            }
        }
        trees.push_back(json{{"nodes", std::move(nodes)}});
    }
    return json{{"format", "hybridcast.booster"}, {"version", kFormatVersion}, {"base_score", b.base_score},
                {"feature_count", b.feature_count},   {"params", to_json(b.params)},   {"trees", std::move(trees)}};
}

inline gbt::Booster booster_from_json(const json& j) {
    return detail::guarded("booster", [&] {
        detail::expect_format(j, "hybridcast.booster");
        gbt::Booster b;
        b.base_score = j.at("base_score").get<double>();
        b.feature_count = j.at("feature_count").get<std::size_t>();
        b.params = tree_params_from_json(j.at("params"));
        for (const json& t : j.at("trees")) {
            std::vector<gbt::Node> nodes;
            for (const json& n : t.at("nodes")) {
                gbt::Node node;
                node.leaf = n.at("leaf").get<bool>();
                if (node.leaf) {
                    node.weight = n.at("weight").get<double>();
                } else {
                    node.feature = n.at("feature").get<std::size_t>();
                    node.threshold = n.at("threshold").get<double>();
                    node.left = n.at("left").get<std::size_t>();
                    node.right = n.at("right").get<std::size_t>();
                    node.gain = n.value("gain", 0.0);
                    if (node.feature >= b.feature_count) throw IoError("booster node feature out of range");
                }
                nodes.push_back(node);
            }
            b.trees.emplace_back(std::move(nodes));
        }
        return b;
    });
}

// ---------------------------------------------------------------------------
// Evaluation report

inline json to_json(const pipeline::EvalReport& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        rows.push_back(json{{"model", row.model}, {"test_mape", row.test_mape}, {"test_minmax_rmse", row.test_minmax_rmse}});
    }
    return json{{"format", "hybridcast.report"}, {"version", kFormatVersion}, {"mape_units", "percent"}, {"rows", rows}};
}

inline std::string report_csv(const pipeline::EvalReport& r) {
    std::ostringstream os;
    csv::RowWriter w(os);
    w.cell("model").cell("test_mape").cell("test_minmax_rmse").end();
    for (const auto& row : r.rows) w.cell(row.model).cell(row.test_mape).cell(row.test_minmax_rmse).end();
    return os.str();
}

// ---------------------------------------------------------------------------
// Model directory

inline std::string_view horizon_name(pipeline::HorizonMode m) {
    return m == pipeline::HorizonMode::per_step ? "per_step" : "horizon_mean";
}

inline pipeline::HorizonMode horizon_from_name(std::string_view s) {
    if (s == "per_step") return pipeline::HorizonMode::per_step;
    if (s == "horizon_mean") return pipeline::HorizonMode::horizon_mean;
    throw ConfigError("unknown horizon mode '" + std::string(s) + "'");
}

/// The hybrid model and both baselines, as trained together by one run.
struct ModelBundle {
    pipeline::HybridModel hybrid;
    pipeline::LstmBaseline lstm_only;
    pipeline::GbtBaseline gbt_lags;
    Vector loss_history;
    Matrix train_latents;
    std::vector<std::string> feature_names;
};

struct ManifestInfo {
    std::uint64_t seed = 0;
    std::string data_hash;
    std::string symbol;
    json config;  // snapshot of the run configuration
};

namespace detail {
inline std::string latents_csv(const Matrix& z) {
    std::ostringstream os;
    csv::RowWriter w(os);
    for (std::size_t j = 0; j < z.cols(); ++j) w.cell("z" + std::to_string(j));
    w.end();
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (double v : z.row(i)) w.cell(v);
        w.end();
    }
    return os.str();
}

inline Matrix latents_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) return {};
    const std::size_t cols = data::detail::split_csv_line(line).size();
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = data::detail::split_csv_line(line);
        if (cells.size() != cols) throw IoError("latent cache row has the wrong width");
        for (const auto& c : cells) {
            auto v = data::detail::parse_double(c);
            if (!v) throw IoError("latent cache holds a non-numeric value");
            values.push_back(*v);
        }
        ++rows;
    }
    return Matrix(rows, cols, std::move(values));
}
}  // namespace detail

/// Writes the bundle into `dir` (which must exist). Layout:
///   manifest.json, config.json, scaler.json, lstm.json, lstm_head.json,
///   booster_<s>.json, gbt_lags_<s>.json, loss_history.csv, train_latents.csv
inline void save_model_dir(const std::filesystem::path& dir, const ModelBundle& b, const ManifestInfo& info) {
    const auto& h = b.hybrid;
    json boosters = json::array();
    for (std::size_t s = 0; s < h.boosters.size(); ++s) {
        const std::string name = "booster_" + std::to_string(s) + ".json";
        write_file(dir / name, dump(to_json(h.boosters[s])));
        boosters.push_back(name);
    }
    json gbt = json::array();
    for (std::size_t s = 0; s < b.gbt_lags.boosters.size(); ++s) {
        const std::string name = "gbt_lags_" + std::to_string(s) + ".json";
        write_file(dir / name, dump(to_json(b.gbt_lags.boosters[s])));
        gbt.push_back(name);
    }
    write_file(dir / "lstm.json", dump(to_json(h.lstm)));
    write_file(dir / "lstm_head.json", dump(to_json(b.lstm_only.head)));
    write_file(dir / "scaler.json", dump(to_json(h.scaler)));
    write_file(dir / "config.json", dump(info.config));
    {
        std::ostringstream os;
        csv::RowWriter w(os);
        w.cell("epoch").cell("loss").end();
        for (std::size_t e = 0; e < b.loss_history.size(); ++e) w.cell(e + 1).cell(b.loss_history[e]).end();
        write_file(dir / "loss_history.csv", os.str());
    }
    write_file(dir / "train_latents.csv", detail::latents_csv(b.train_latents));

    json manifest{{"format", "hybridcast.model"},
                  {"version", kFormatVersion},
                  {"symbol", info.symbol},
                  {"seed", info.seed},
                  {"data_hash", info.data_hash},
                  {"n_steps_in", h.n_in},
                  {"n_steps_out", h.n_out},
                  {"features", b.feature_names},
                  {"target_column", h.target_column},
                  {"horizon_mode", horizon_name(h.horizon)},
                  {"files",
                   {{"config", "config.json"},
                    {"scaler", "scaler.json"},
                    {"lstm", "lstm.json"},
                    {"lstm_head", "lstm_head.json"},
                    {"boosters", boosters},
                    {"gbt_lags", gbt},
                    {"loss_history", "loss_history.csv"},
                    {"train_latents", "train_latents.csv"}}}};
    write_file(dir / "manifest.json", dump(manifest));
}

struct LoadedModel {
    ModelBundle bundle;
    ManifestInfo info;
};

inline LoadedModel load_model_dir(const std::filesystem::path& dir) {
    const json m = load_json(dir / "manifest.json");
    return detail::guarded("model manifest", [&] {
        detail::expect_format(m, "hybridcast.model");
        LoadedModel out;
        out.info.seed = m.at("seed").get<std::uint64_t>();
        out.info.data_hash = m.at("data_hash").get<std::string>();
        out.info.symbol = m.at("symbol").get<std::string>();
        const json& files = m.at("files");
        out.info.config = load_json(dir / files.at("config").get<std::string>());

        ModelBundle& b = out.bundle;
        b.feature_names = m.at("features").get<std::vector<std::string>>();
        auto& h = b.hybrid;
        h.n_in = m.at("n_steps_in").get<std::size_t>();
        h.n_out = m.at("n_steps_out").get<std::size_t>();
        h.target_column = m.at("target_column").get<std::size_t>();
        h.horizon = horizon_from_name(m.at("horizon_mode").get<std::string>());
        h.scaler = scaler_from_json(load_json(dir / files.at("scaler").get<std::string>()));
        h.lstm = lstm_from_json(load_json(dir / files.at("lstm").get<std::string>()));
        for (const json& f : files.at("boosters")) {
            h.boosters.push_back(booster_from_json(load_json(dir / f.get<std::string>())));
        }
        const std::size_t expected = h.horizon == pipeline::HorizonMode::per_step ? h.n_out : 1;
        if (h.boosters.size() != expected) throw IoError("manifest lists the wrong number of boosters");
        for (const auto& bst : h.boosters) {
            if (bst.feature_count != h.lstm.hidden) throw IoError("booster feature count differs from LSTM width");
        }

        b.lstm_only = {h.lstm, head_from_json(load_json(dir / files.at("lstm_head").get<std::string>())), h.scaler,
                       h.target_column};
        b.gbt_lags.scaler = h.scaler;
        b.gbt_lags.target_column = h.target_column;
        b.gbt_lags.n_in = h.n_in;
        b.gbt_lags.n_out = h.n_out;
        b.gbt_lags.horizon = h.horizon;
        for (const json& f : files.at("gbt_lags")) {
            b.gbt_lags.boosters.push_back(booster_from_json(load_json(dir / f.get<std::string>())));
        }
        b.train_latents = detail::latents_from_csv(read_file(dir / files.at("train_latents").get<std::string>()));
        return out;
    });
}

}  // namespace hybridcast
