#include "embedclf/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "embedclf/error.hpp"
#include "embedclf/rng.hpp"

namespace embedclf {

std::string_view to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::Binary: return "binary";
        case TaskKind::Multiclass: return "multiclass";
        case TaskKind::Multilabel: return "multilabel";
    }
    return "unknown";
}

TaskKind parse_task_kind(std::string_view text) {
    if (text == "binary") return TaskKind::Binary;
    if (text == "multiclass") return TaskKind::Multiclass;
    if (text == "multilabel") return TaskKind::Multilabel;
    fail(ErrorKind::Schema, "unknown task kind '" + std::string(text) +
                                "' (expected binary, multiclass or multilabel)");
}

LabelSchema::LabelSchema(TaskKind kind, std::vector<std::string> class_names)
    : kind_(kind), class_names_(std::move(class_names)) {
    if (class_names_.size() < 2) fail(ErrorKind::Schema, "a label schema needs at least two classes");
    if (kind_ == TaskKind::Binary && class_names_.size() != 2)
        fail(ErrorKind::Schema, "a binary schema has exactly two classes, got " +
                                    std::to_string(class_names_.size()));
    std::unordered_set<std::string_view> seen;
    for (const auto& name : class_names_) {
        if (name.empty()) fail(ErrorKind::Schema, "class names must be non-empty");
        if (!seen.insert(name).second) fail(ErrorKind::Schema, "duplicate class name '" + name + "'");
    }
}

std::size_t LabelSchema::index_of(std::string_view name) const noexcept {
    auto it = std::find(class_names_.begin(), class_names_.end(), name);
    return it == class_names_.end() ? npos : static_cast<std::size_t>(it - class_names_.begin());
}

bool operator==(const Sample& a, const Sample& b) {
    if (a.id != b.id || a.image_path != b.image_path || a.image_missing != b.image_missing ||
        a.labels.size() != b.labels.size())
        return false;
    for (std::size_t i = 0; i < a.labels.size(); ++i) {
        const bool na = is_absent(a.labels[i]);
        const bool nb = is_absent(b.labels[i]);
        if (na != nb || (!na && a.labels[i] != b.labels[i])) return false;
    }
    return true;
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

// RFC 4180 fields: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"' && trim(field).empty()) {
            field.clear();
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(was_quoted ? field : std::string(trim(field)));
            field.clear();
            was_quoted = false;
        } else {
            field.push_back(c);
        }
    }
    if (quoted) fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": unterminated quoted field");
    fields.push_back(was_quoted ? field : std::string(trim(field)));
    return fields;
}

float parse_label_cell(std::string_view cell, std::size_t line_no, const std::string& column) {
    if (cell.empty() || cell == "-1" || cell == "-1.0") return kAbsentLabel;
    if (cell == "0" || cell == "0.0") return 0.0f;
    if (cell == "1" || cell == "1.0") return 1.0f;
    fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": label '" + std::string(cell) +
                               "' in column '" + column + "' is not one of 0, 1, -1 or empty");
}

void check_single_label_row(const Sample& s, const LabelSchema& schema, std::size_t line_no) {
    std::size_t positives = 0;
    for (float v : s.labels)
        if (!is_absent(v) && v == 1.0f) ++positives;
    if (positives != 1)
        fail(ErrorKind::Validation, "line " + std::to_string(line_no) + ": sample '" + s.id + "' has " +
                                        std::to_string(positives) + " positive labels; a " +
                                        std::string(to_string(schema.kind())) +
                                        " row needs exactly one");
}

}  // namespace

Dataset parse_manifest(std::string_view text, const LabelSchema& schema,
                       const std::filesystem::path& base_dir, std::string dataset_name) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

    Dataset ds{std::move(dataset_name), schema, {}};
    std::vector<std::size_t> column_to_class;
    bool have_header = false;
    std::unordered_set<std::string> ids;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (trim(line).empty()) {
            if (end == text.size()) break;
            continue;
        }

        auto fields = split_csv_line(line, line_no);
        if (!have_header) {
            if (fields.size() < 2 || fields[0] != "id" || fields[1] != "image_path")
                fail(ErrorKind::Parse, "line " + std::to_string(line_no) +
                                           ": header must start with 'id,image_path'");
            std::vector<bool> covered(schema.num_classes(), false);
            for (std::size_t c = 2; c < fields.size(); ++c) {
                const auto k = schema.index_of(fields[c]);
                if (k == LabelSchema::npos)
                    fail(ErrorKind::Schema, "unknown class name '" + fields[c] + "' in manifest header");
                if (covered[k]) fail(ErrorKind::Schema, "class column '" + fields[c] + "' appears twice");
                covered[k] = true;
                column_to_class.push_back(k);
            }
            for (std::size_t k = 0; k < covered.size(); ++k)
                if (!covered[k])
                    fail(ErrorKind::Schema, "manifest has no column for class '" +
                                                schema.class_names()[k] + "'");
            have_header = true;
            continue;
        }

        if (fields.size() != column_to_class.size() + 2)
            fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": expected " +
                                       std::to_string(column_to_class.size() + 2) + " columns, got " +
                                       std::to_string(fields.size()));
        Sample s;
        s.id = fields[0];
        if (s.id.empty()) fail(ErrorKind::Validation, "line " + std::to_string(line_no) + ": empty sample id");
        if (!ids.insert(s.id).second)
            fail(ErrorKind::Validation, "line " + std::to_string(line_no) + ": duplicate sample id '" + s.id + "'");
        if (fields[1].empty()) {
            s.image_missing = true;
        } else {
            std::filesystem::path p(fields[1]);
            s.image_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
        }
        s.labels.assign(schema.num_classes(), kAbsentLabel);
        for (std::size_t c = 0; c < column_to_class.size(); ++c)
            s.labels[column_to_class[c]] =
                parse_label_cell(fields[c + 2], line_no, schema.class_names()[column_to_class[c]]);
        if (schema.kind() != TaskKind::Multilabel) check_single_label_row(s, schema, line_no);
        ds.samples.push_back(std::move(s));
    }
    if (!have_header) fail(ErrorKind::Parse, "manifest is empty (no header line)");
    return ds;
}

Dataset load_manifest(const std::filesystem::path& path, const LabelSchema& schema,
                      std::string dataset_name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open manifest '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    if (dataset_name.empty()) dataset_name = path.stem().string();
    return parse_manifest(buf.str(), schema, path.parent_path(), std::move(dataset_name));
}

ImputationSummary impute_missing_labels(Dataset ds) {
    std::size_t imputed = 0;
    for (auto& s : ds.samples)
        for (auto& v : s.labels)
            if (is_absent(v)) {
                v = 0.0f;
                ++imputed;
            }
    return {std::move(ds), imputed};
}

std::size_t ratio_train_count(std::size_t n, double fraction) {
    if (!(fraction > 0.0 && fraction < 1.0))
        fail(ErrorKind::Validation, "train fraction must lie in (0, 1), got " + std::to_string(fraction));
    // round half down: ceil(x - 0.5)
    const long double x = static_cast<long double>(fraction) * static_cast<long double>(n);
    auto count = static_cast<std::size_t>(std::ceil(x - 0.5L));
    return std::min(count, n);
}

namespace {

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
    Dataset out{ds.name, ds.schema, {}};
    out.samples.reserve(indices.size());
    for (auto i : indices) out.samples.push_back(ds.samples[i]);
    return out;
}

}  // namespace

TrainTestSplit split(const Dataset& ds, const SplitSpec& spec) {
    if (ds.samples.empty()) fail(ErrorKind::Validation, "cannot split an empty dataset");
    const std::size_t n = ds.size();
    std::vector<bool> in_train(n, false);

    if (const auto* ratio = std::get_if<RatioSplit>(&spec.mode)) {
        const std::size_t n_train = ratio_train_count(n, ratio->train_fraction);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        SplitMix64 rng(spec.seed);
        shuffle(std::span(order), rng);
        for (std::size_t k = 0; k < n_train; ++k) in_train[order[k]] = true;
    } else {
        const auto& lists = std::get<ExplicitSplit>(spec.mode);
        std::unordered_map<std::string_view, std::size_t> index;
        for (std::size_t i = 0; i < n; ++i) index.emplace(ds.samples[i].id, i);
        std::vector<int> assigned(n, 0);
        auto mark = [&](const std::vector<std::string>& ids, bool train) {
            for (const auto& id : ids) {
                auto it = index.find(id);
                if (it == index.end()) fail(ErrorKind::Validation, "split list references unknown id '" + id + "'");
                if (assigned[it->second]++)
                    fail(ErrorKind::Validation, "id '" + id + "' is listed more than once across train/test");
                in_train[it->second] = train;
            }
        };
        mark(lists.train_ids, true);
        mark(lists.test_ids, false);
        for (std::size_t i = 0; i < n; ++i)
            if (!assigned[i])
                fail(ErrorKind::Validation, "sample '" + ds.samples[i].id + "' is in neither split list");
    }

    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < n; ++i) (in_train[i] ? train_idx : test_idx).push_back(i);
    return {subset(ds, train_idx), subset(ds, test_idx)};
}

std::vector<std::string> read_id_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open split list '" + path.string() + "'");
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (!t.empty()) ids.emplace_back(t);
    }
    return ids;
}

void write_id_list(const std::filesystem::path& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write '" + path.string() + "'");
    for (const auto& s : ds.samples) out << s.id << '\n';
}

std::vector<float> label_rows(const Dataset& ds) {
    const std::size_t k = ds.schema.num_classes();
    std::vector<float> out;
    out.reserve(ds.size() * k);
    for (const auto& s : ds.samples) out.insert(out.end(), s.labels.begin(), s.labels.end());
    return out;
}

}  // namespace embedclf
