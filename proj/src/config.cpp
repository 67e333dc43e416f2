#include "embedclf/config.hpp"

#include <charconv>
#include <cmath>

#include "byte_io.hpp"
#include "embedclf/error.hpp"

namespace embedclf {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

[[noreturn]] void bad_line(int line, const std::string& what) {
    fail(ErrorKind::Config, "config line " + std::to_string(line) + ": " + what);
}

// Reads one scalar starting at s[pos]; returns its text and whether it was quoted.
std::pair<std::string, bool> scalar(std::string_view s, std::size_t& pos, int line) {
    if (s[pos] == '"') {
        std::string out;
        for (++pos; pos < s.size() && s[pos] != '"'; ++pos) {
            if (s[pos] == '\\' && pos + 1 < s.size()) {
                const char e = s[++pos];
                out.push_back(e == 'n' ? '\n' : e == 't' ? '\t' : e);
            } else {
                out.push_back(s[pos]);
            }
        }
        if (pos >= s.size()) bad_line(line, "unterminated string");
        ++pos;
        return {out, true};
    }
    const auto end = s.find_first_of(",]#", pos);
    auto text = trim(s.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos));
    pos = end == std::string_view::npos ? s.size() : end;
    if (text.empty()) bad_line(line, "missing value");
    return {std::string(text), false};
}

double to_number(const std::string& text, int line, std::string_view key) {
    double v = 0;
    auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || p != text.data() + text.size() || !std::isfinite(v))
        bad_line(line, "'" + std::string(key) + "' expects a number, got '" + text + "'");
    return v;
}

}  // namespace

ConfigFile ConfigFile::parse(std::string_view text) {
    ConfigFile cfg;
    int line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        const auto raw = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') bad_line(line_no, "tables are not supported; use flat keys");
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) bad_line(line_no, "expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) bad_line(line_no, "missing key");
        const auto rest = trim(line.substr(eq + 1));
        if (rest.empty()) bad_line(line_no, "missing value for '" + std::string(key) + "'");
        Value v;
        v.line = line_no;
        v.quoted = true;
        std::size_t pos = 0;
        if (rest.front() == '[') {
            v.is_array = true;
            pos = 1;
            for (;;) {
                while (pos < rest.size() && (rest[pos] == ' ' || rest[pos] == '\t')) ++pos;
                if (pos >= rest.size()) bad_line(line_no, "unterminated array");
                if (rest[pos] == ']') {
                    ++pos;
                    break;
                }
                auto [item, quoted] = scalar(rest, pos, line_no);
                v.items.push_back(std::move(item));
                v.quoted &= quoted;
                while (pos < rest.size() && (rest[pos] == ' ' || rest[pos] == '\t')) ++pos;
                if (pos < rest.size() && rest[pos] == ',') ++pos;
                else if (pos >= rest.size() || rest[pos] != ']') bad_line(line_no, "expected ',' or ']' in array");
            }
        } else {
            auto [item, quoted] = scalar(rest, pos, line_no);
            v.items.push_back(std::move(item));
            v.quoted = quoted;
        }
        const auto tail = trim(rest.substr(std::min(pos, rest.size())));
        if (!tail.empty() && tail.front() != '#') bad_line(line_no, "unexpected text after value");
        if (!cfg.values_.emplace(std::string(key), std::move(v)).second)
            bad_line(line_no, "key '" + std::string(key) + "' is set twice");
    }
    return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
    try {
        return parse(bytes::read_all(path, "config file"));
    } catch (const Error& e) {
        fail(ErrorKind::Config, path.string() + ": " + e.what());
    }
}

const ConfigFile::Value* ConfigFile::find(std::string_view key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    read_.insert(std::string(key));
    return &it->second;
}

bool ConfigFile::has(std::string_view key) const { return values_.contains(key); }

std::optional<std::string> ConfigFile::string(std::string_view key) const {
    const auto* v = find(key);
    if (!v) return std::nullopt;
    if (v->is_array || !v->quoted) bad_line(v->line, "'" + std::string(key) + "' expects a quoted string");
    return v->items[0];
}

std::optional<double> ConfigFile::number(std::string_view key) const {
    const auto* v = find(key);
    if (!v) return std::nullopt;
    if (v->is_array || v->quoted) bad_line(v->line, "'" + std::string(key) + "' expects a number");
    return to_number(v->items[0], v->line, key);
}

std::optional<std::int64_t> ConfigFile::integer(std::string_view key) const {
    const auto* v = find(key);
    if (!v) return std::nullopt;
    const auto& t = v->is_array || v->quoted ? std::string() : v->items[0];
    std::int64_t out = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (t.empty() || ec != std::errc() || p != t.data() + t.size())
        bad_line(v->line, "'" + std::string(key) + "' expects an integer");
    return out;
}

std::optional<bool> ConfigFile::boolean(std::string_view key) const {
    const auto* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_array && !v->quoted && (v->items[0] == "true" || v->items[0] == "false")) return v->items[0] == "true";
    bad_line(v->line, "'" + std::string(key) + "' expects true or false");
}

std::optional<std::vector<std::string>> ConfigFile::strings(std::string_view key) const {
    const auto* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_array || !v->quoted) bad_line(v->line, "'" + std::string(key) + "' expects an array of strings");
    return v->items;
}

std::optional<std::vector<double>> ConfigFile::numbers(std::string_view key) const {
    const auto* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_array || (v->quoted && !v->items.empty())) bad_line(v->line, "'" + std::string(key) + "' expects an array of numbers");
    std::vector<double> out;
    for (const auto& t : v->items) out.push_back(to_number(t, v->line, key));
    return out;
}

std::vector<std::string> ConfigFile::unread() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_)
        if (!read_.contains(k)) out.push_back(k);
    return out;
}

namespace {

RunConfig build_run_config(std::string_view text, const std::filesystem::path& base_dir) {
    const auto cfg = ConfigFile::parse(text);
    const auto path = [&](std::string_view key) -> std::optional<std::filesystem::path> {
        auto s = cfg.string(key);
        if (!s) return std::nullopt;
        std::filesystem::path p(*s);
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    };
    const auto require = [&](std::string_view key) {
        if (!cfg.has(key)) fail(ErrorKind::Config, "config is missing required key '" + std::string(key) + "'");
    };
    const auto count = [&](std::string_view key, std::int64_t lo) -> std::optional<std::size_t> {
        auto v = cfg.integer(key);
        if (!v) return std::nullopt;
        if (*v < lo) fail(ErrorKind::Config, "'" + std::string(key) + "' must be at least " + std::to_string(lo));
        return static_cast<std::size_t>(*v);
    };

    RunConfig r;
    for (auto key : {"dataset", "manifest", "task", "classes", "encoder_graph"}) require(key);
    r.dataset = *cfg.string("dataset");
    r.manifest = *path("manifest");
    r.task = parse_task_kind(*cfg.string("task"));
    r.classes = *cfg.strings("classes");
    try {
        (void)r.schema();
    } catch (const Error& e) {
        fail(ErrorKind::Config, std::string("classes: ") + e.what());
    }

    const bool geometry = cfg.has("resize") || cfg.has("crop") || cfg.has("normalization");
    if (auto p = cfg.string("preset")) {
        if (geometry) fail(ErrorKind::Config, "give either 'preset' or resize/crop/normalization, not both");
        r.preset_name = *p;
        try {
            r.preprocess = preset(*p);
        } catch (const Error& e) {
            fail(ErrorKind::Config, e.what());
        }
    } else {
        for (auto key : {"resize", "crop", "normalization"}) require(key);
        const auto resize = static_cast<int>(*count("resize", 1));
        const auto crop = static_cast<int>(*count("crop", 1));
        r.preprocess = {resize, crop, crop, parse_normalization(*cfg.string("normalization"))};
        try {
            r.preprocess.validate();
        } catch (const Error& e) {
            fail(ErrorKind::Config, e.what());
        }
    }

    if (auto e = cfg.string("encoder")) r.encoder_id = parse_encoder_id(*e);
    r.encoder_graph = *path("encoder_graph");
    if (auto b = count("batch_size", 1)) r.batch_size = *b;

    if (auto f = cfg.string("family")) r.family = parse_family(*f);
    if (auto c = cfg.numbers("C_values")) r.grid.C_values = *c;
    if (auto l = cfg.strings("losses")) {
        r.grid.losses.clear();
        for (const auto& s : *l) r.grid.losses.push_back(parse_svm_loss(s));
    }
    if (auto k = cfg.strings("kernels")) {
        r.grid.kernels.clear();
        for (const auto& s : *k) r.grid.kernels.push_back(parse_kernel_spec(s));
    }
    r.grid.validate(r.family);
    if (auto f = count("folds", 2)) r.folds = *f;
    r.train.family = r.family;
    r.train.C = r.grid.C_values.front();
    if (!r.grid.losses.empty()) r.train.loss = r.grid.losses.front();
    if (!r.grid.kernels.empty()) r.train.kernel = r.grid.kernels.front();

    if (auto s = cfg.integer("seed")) {
        if (*s < 0) fail(ErrorKind::Config, "'seed' must be non-negative");
        r.seed = static_cast<std::uint64_t>(*s);
    }
    r.split.seed = r.seed;
    const auto train_ids = path("train_ids");
    const auto test_ids = path("test_ids");
    if (train_ids || test_ids) {
        if (!train_ids || !test_ids) fail(ErrorKind::Config, "'train_ids' and 'test_ids' must be given together");
        if (cfg.has("train_fraction")) fail(ErrorKind::Config, "give either explicit id lists or 'train_fraction'");
        r.split.mode = ExplicitSplit{read_id_list(*train_ids), read_id_list(*test_ids)};
    } else if (auto f = cfg.number("train_fraction")) {
        if (!(*f > 0 && *f < 1)) fail(ErrorKind::Config, "'train_fraction' must lie in (0, 1)");
        r.split.mode = RatioSplit{*f};
    }

    if (auto p = path("cache_dir")) r.cache_dir = *p;
    else if (!base_dir.empty()) r.cache_dir = base_dir / r.cache_dir;
    if (auto p = path("out")) r.out_dir = *p;
    else if (!base_dir.empty()) r.out_dir = base_dir / r.out_dir;
    if (auto p = path("benchmarks")) r.benchmarks = *p;
    if (auto t = count("threads", 1)) r.threads = static_cast<unsigned>(*t);
    if (auto a = cfg.string("average")) r.averaging = parse_averaging(*a);
    if (auto s = cfg.boolean("roc_svg")) r.roc_svg = *s;
    if (auto g = cfg.number("kernel_memory_gb")) {
        if (!(*g > 0)) fail(ErrorKind::Config, "'kernel_memory_gb' must be positive");
        r.solver.kernel_memory_budget = *g * 1024 * 1024 * 1024;
    }
    r.solver.seed = r.seed;

    if (const auto extra = cfg.unread(); !extra.empty())
        fail(ErrorKind::Config, "unknown config key '" + extra.front() + "'");
    return r;
}

}  // namespace

RunConfig parse_run_config(std::string_view text, const std::filesystem::path& base_dir) {
    // every problem found while reading the config is a config error,
    // whichever module's parser reported it
    try {
        return build_run_config(text, base_dir);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Config) throw;
        fail(ErrorKind::Config, e.what());
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = bytes::read_all(path, "config file");
    } catch (const Error& e) {
        fail(ErrorKind::Config, e.what());
    }
    try {
        return parse_run_config(text, path.parent_path());
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

}  // namespace embedclf
