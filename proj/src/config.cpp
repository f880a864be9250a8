#include "kgclm/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace kgc {

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
        std::size_t used = 0;
        const unsigned long long x = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a non-negative integer, got '" +
                          v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

struct Field {
    enum Kind { str, num, u64, boolean } kind;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> put;
};

#define KGCLM_STR_FIELD(name)                                                              \
    {#name, Field{Field::str, [](const ExperimentConfig& c) { return c.name; },            \
                  [](ExperimentConfig& c, const std::string& v) { c.name = v; }}}
#define KGCLM_NUM_FIELD(name)                                                              \
    {#name, Field{Field::num, [](const ExperimentConfig& c) { return fmt_double(c.name); },\
                  [](ExperimentConfig& c, const std::string& v) {                          \
                      c.name = parse_double(#name, v);                                     \
                  }}}
#define KGCLM_U64_FIELD(name)                                                              \
    {#name, Field{Field::u64,                                                              \
                  [](const ExperimentConfig& c) { return std::to_string(c.name); },        \
                  [](ExperimentConfig& c, const std::string& v) {                          \
                      c.name = parse_u64(#name, v);                                        \
                  }}}
#define KGCLM_BOOL_FIELD(name)                                                             \
    {#name, Field{Field::boolean,                                                          \
                  [](const ExperimentConfig& c) { return c.name ? "true" : "false"; },     \
                  [](ExperimentConfig& c, const std::string& v) {                          \
                      c.name = parse_bool(#name, v);                                       \
                  }}}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        KGCLM_STR_FIELD(data_dir),
        KGCLM_STR_FIELD(out_dir),
        KGCLM_STR_FIELD(checkpoint),
        KGCLM_STR_FIELD(vocab),
        KGCLM_STR_FIELD(predictions),
        KGCLM_NUM_FIELD(ratio_train),
        KGCLM_NUM_FIELD(ratio_valid),
        KGCLM_NUM_FIELD(ratio_test),
        KGCLM_STR_FIELD(alignment_pairs),
        KGCLM_STR_FIELD(alignment_langs),
        KGCLM_STR_FIELD(tokenizer_mode),
        KGCLM_U64_FIELD(n_layers),
        KGCLM_U64_FIELD(n_heads),
        KGCLM_U64_FIELD(d_model),
        KGCLM_U64_FIELD(d_ff),
        KGCLM_U64_FIELD(max_seq_len),
        KGCLM_STR_FIELD(mask_mode),
        KGCLM_BOOL_FIELD(tie_output),
        KGCLM_NUM_FIELD(lr),
        KGCLM_U64_FIELD(batch_size),
        KGCLM_U64_FIELD(epochs),
        KGCLM_U64_FIELD(seed),
        KGCLM_STR_FIELD(optimizer),
        KGCLM_NUM_FIELD(alpha),
        KGCLM_NUM_FIELD(beta),
        KGCLM_NUM_FIELD(gamma),
        KGCLM_STR_FIELD(score_variant),
        KGCLM_STR_FIELD(jsd_pos_form),
        KGCLM_BOOL_FIELD(gamma_margin),
        KGCLM_U64_FIELD(checkpoint_interval),
        KGCLM_U64_FIELD(grad_norm_interval),
        KGCLM_U64_FIELD(eval_interval),
        KGCLM_U64_FIELD(patience),
        KGCLM_NUM_FIELD(stop_train_hits1),
        KGCLM_U64_FIELD(beam_width),
        KGCLM_STR_FIELD(candidate_mode),
        KGCLM_BOOL_FIELD(filtered),
        KGCLM_U64_FIELD(length_bucket_threshold),
        KGCLM_STR_FIELD(eval_split),
        KGCLM_STR_FIELD(eval_mode),
        KGCLM_U64_FIELD(gen_entities),
        KGCLM_U64_FIELD(gen_relations),
        KGCLM_U64_FIELD(gen_triples),
        KGCLM_U64_FIELD(gen_languages),
        KGCLM_STR_FIELD(gen_pattern),
        KGCLM_U64_FIELD(gen_alignment_pairs),
        KGCLM_STR_FIELD(predict_head),
        KGCLM_STR_FIELD(predict_rel),
        KGCLM_STR_FIELD(predict_lang),
        KGCLM_U64_FIELD(predict_k),
    };
    return table;
}

#undef KGCLM_STR_FIELD
#undef KGCLM_NUM_FIELD
#undef KGCLM_U64_FIELD
#undef KGCLM_BOOL_FIELD

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.put(*this, value);
}

std::string ExperimentConfig::to_text() const {
    std::ostringstream os;
    for (const auto& [name, field] : fields()) os << name << '=' << field.get(*this) << '\n';
    return os.str();
}

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream is(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config:" + std::to_string(line_no) + ": expected key=value");
        cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str());
}

void ExperimentConfig::save_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw std::runtime_error("config: cannot write " + path);
    out << to_text();
}

void ExperimentConfig::apply_env_overrides() {
    for (const auto& [name, field] : fields()) {
        std::string env_name = "KGCLM_";
        for (char c : name) env_name += char(std::toupper(static_cast<unsigned char>(c)));
        if (const char* v = std::getenv(env_name.c_str())) set(name, v);
    }
}

void ExperimentConfig::apply_ablation(const std::string& which) {
    if (which == "local")
        beta = 0.0;
    else if (which == "global")
        alpha = 0.0;
    else if (which == "mask")
        mask_mode = "no_role_sep";
    else
        throw ConfigError("config: unknown ablation '" + which +
                          "' (expected local, global, or mask)");
}

ModelConfig ExperimentConfig::model_config(std::size_t vocab_size) const {
    ModelConfig m;
    m.n_layers = n_layers;
    m.n_heads = n_heads;
    m.d_model = d_model;
    m.d_ff = d_ff;
    m.max_seq_len = max_seq_len;
    m.vocab_size = vocab_size;
    m.mask_mode = mask_mode_from_name(mask_mode);
    m.tie_output = tie_output;
    return m;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.lr = lr;
    t.batch_size = batch_size;
    t.epochs = epochs;
    t.seed = seed;
    t.weights = loss_weights();
    if (optimizer == "adam")
        t.optimizer = OptimizerKind::adam;
    else if (optimizer == "sgd")
        t.optimizer = OptimizerKind::sgd;
    else
        throw ConfigError("config: optimizer must be adam or sgd");
    t.checkpoint_interval = checkpoint_interval;
    t.grad_norm_interval = grad_norm_interval;
    t.eval_interval = eval_interval;
    t.patience = patience;
    t.stop_train_hits1 = stop_train_hits1;
    t.eval_beam_width = beam_width;
    t.out_dir = out_dir;
    return t;
}

LossWeights ExperimentConfig::loss_weights() const {
    LossWeights w;
    w.alpha = alpha;
    w.beta = beta;
    w.gamma = gamma;
    w.score_variant = score_variant_from_name(score_variant);
    if (jsd_pos_form == "sp_neg_t")
        w.jsd_pos_form = JsdPositiveForm::sp_neg_t;
    else if (jsd_pos_form == "sp_t")
        w.jsd_pos_form = JsdPositiveForm::sp_t;
    else
        throw ConfigError("config: jsd_pos_form must be sp_neg_t or sp_t");
    w.gamma_margin = gamma_margin;
    return w;
}

EvalConfig ExperimentConfig::eval_config() const {
    EvalConfig e;
    e.beam_width = beam_width;
    e.ks = {1, 3, 10};
    if (candidate_mode == "per_language")
        e.per_language_candidates = true;
    else if (candidate_mode == "global")
        e.per_language_candidates = false;
    else
        throw ConfigError("config: candidate_mode must be per_language or global");
    e.filtered = filtered;
    e.length_bucket_threshold = length_bucket_threshold;
    if (eval_mode == "kgc")
        e.mode = EvalMode::kgc;
    else if (eval_mode == "alignment")
        e.mode = EvalMode::alignment;
    else
        throw ConfigError("config: eval_mode must be kgc or alignment");
    return e;
}

BaselineConfig ExperimentConfig::baseline_config() const {
    BaselineConfig b;
    b.seed = seed;
    b.epochs = epochs;
    b.batch_size = batch_size;
    return b;
}

TokenizerMode ExperimentConfig::tokenizer() const {
    if (tokenizer_mode == "char") return TokenizerMode::chars;
    if (tokenizer_mode == "word") return TokenizerMode::words;
    throw ConfigError("config: tokenizer_mode must be char or word");
}

}  // namespace kgc
