#include "teamfuse/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <unordered_set>

#include "json.hpp"

namespace teamfuse {

namespace {

WarningHandler& warning_handler() {
    static WarningHandler handler = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
    return handler;
}

std::string row_prefix(std::size_t row) {
    return row == 0 ? std::string{} : "row " + std::to_string(row) + ": ";
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

// Splits one CSV record. Double quotes may wrap a field; "" is a literal quote.
std::vector<std::string> split_csv_line(std::string_view line, std::size_t row) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
            was_quoted = true;
        } else if (ch == ',') {
            fields.push_back(was_quoted ? current : std::string(trim(current)));
            current.clear();
            was_quoted = false;
        } else {
            current.push_back(ch);
        }
    }
    if (quoted) throw ParseError(row_prefix(row) + "unterminated quoted field");
    fields.push_back(was_quoted ? current : std::string(trim(current)));
    return fields;
}

std::string quote_csv(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char ch : field) {
        if (ch == '"') out.push_back('"');
        out.push_back(ch);
    }
    out.push_back('"');
    return out;
}

// Non-empty, non-comment lines with their 1-based line numbers.
std::vector<std::pair<std::size_t, std::string_view>> csv_lines(std::string_view text) {
    std::vector<std::pair<std::size_t, std::string_view>> out;
    std::size_t row = 0;
    while (!text.empty()) {
        ++row;
        const auto end = text.find('\n');
        std::string_view line = text.substr(0, end);
        text = end == std::string_view::npos ? std::string_view{} : text.substr(end + 1);
        if (trim(line).empty() || trim(line).front() == '#') continue;
        out.emplace_back(row, line);
    }
    return out;
}

int parse_label(std::string_view text, std::size_t row, std::string_view what) {
    int value = 0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last) {
        throw ParseError(row_prefix(row) + "cannot parse " + std::string(what) + " '" + std::string(text) + "'");
    }
    return value;
}

double parse_number(std::string_view text, std::size_t row, std::string_view what) {
    try {
        return parse_double(text);
    } catch (const ParseError&) {
        throw ParseError(row_prefix(row) + "cannot parse " + std::string(what) + " '" + std::string(text) + "'");
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

}  // namespace

std::string csv_field(const std::string& field) {
    return quote_csv(field);
}

std::string read_text_file(const std::filesystem::path& path) {
    return read_file(path);
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    write_file(path, content);
}

WarningHandler set_warning_handler(WarningHandler handler) {
    auto old = std::move(warning_handler());
    warning_handler() = std::move(handler);
    return old;
}

namespace {
thread_local int quiet_depth = 0;
}

QuietWarnings::QuietWarnings() { ++quiet_depth; }
QuietWarnings::~QuietWarnings() { --quiet_depth; }

void warn(std::string_view message) {
    if (quiet_depth > 0) return;
    static std::mutex mutex;
    std::lock_guard lock(mutex);
    if (warning_handler()) warning_handler()(message);
}

std::string_view to_string(Kind kind) {
    return kind == Kind::human ? "human" : "machine";
}

Kind parse_kind(std::string_view text) {
    if (text == "human") return Kind::human;
    if (text == "machine") return Kind::machine;
    throw ParseError("unknown teammate kind '" + std::string(text) + "' (expected human or machine)");
}

std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
    text = trim(text);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError("cannot parse number '" + std::string(text) + "'");
    }
    return value;
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

Dataset::Dataset(int num_classes, std::vector<std::pair<std::string, int>> truth,
                 std::vector<Judgment> judgments, std::vector<std::string> teammate_order)
    : num_classes_(num_classes), judgments_(std::move(judgments)) {
    if (num_classes_ < 2) throw ValidationError("number of classes must be at least 2");

    for (auto& [name, label] : truth) {
        if (label < 0 || label >= num_classes_) {
            throw ValidationError("true label " + std::to_string(label) + " of test case '" + name +
                                  "' outside [0, " + std::to_string(num_classes_) + ")");
        }
        if (!case_lookup_.emplace(name, cases_.size()).second) {
            throw ValidationError("duplicate ground truth for test case '" + name + "'");
        }
        cases_.push_back(name);
        truth_.push_back(label);
    }

    std::unordered_map<std::string, std::size_t> mate_lookup;
    for (const auto& name : teammate_order) {
        if (!mate_lookup.emplace(name, teammates_.size()).second) {
            throw ValidationError("duplicate teammate '" + name + "' in teammate order");
        }
        teammates_.push_back(name);
        kinds_.push_back(Kind::human);
    }
    std::vector<bool> seen(teammates_.size(), false);
    const bool fixed_order = !teammate_order.empty();

    // (case, teammate) -> judgment indices in file order
    std::map<std::pair<std::size_t, std::size_t>, std::vector<std::size_t>> rows;
    for (std::size_t j = 0; j < judgments_.size(); ++j) {
        const auto& jd = judgments_[j];
        const auto prefix = row_prefix(jd.source_row);
        auto cit = case_lookup_.find(jd.test_case);
        if (cit == case_lookup_.end()) {
            throw ValidationError(prefix + "test case '" + jd.test_case + "' has no ground truth");
        }
        if (jd.choice < 0 || jd.choice >= num_classes_) {
            throw ValidationError(prefix + "choice " + std::to_string(jd.choice) + " outside [0, " +
                                  std::to_string(num_classes_) + ")");
        }
        if (!std::isfinite(jd.confidence) || jd.confidence < 0.0) {
            throw ValidationError(prefix + "confidence must be a finite non-negative number");
        }
        if (!jd.class_scores.empty()) {
            if (static_cast<int>(jd.class_scores.size()) != num_classes_) {
                throw ValidationError(prefix + "expected " + std::to_string(num_classes_) + " class scores, got " +
                                      std::to_string(jd.class_scores.size()));
            }
            for (double s : jd.class_scores) {
                if (!std::isfinite(s) || s < 0.0) {
                    throw ValidationError(prefix + "class scores must be finite and non-negative");
                }
            }
            const double top = *std::max_element(jd.class_scores.begin(), jd.class_scores.end());
            if (jd.class_scores[jd.choice] != top) {
                throw ValidationError(prefix + "choice " + std::to_string(jd.choice) +
                                      " is not the argmax of the class scores");
            }
        }
        auto mit = mate_lookup.find(jd.teammate);
        if (mit == mate_lookup.end()) {
            if (fixed_order) throw ValidationError(prefix + "teammate '" + jd.teammate + "' missing from teammate order");
            mit = mate_lookup.emplace(jd.teammate, teammates_.size()).first;
            teammates_.push_back(jd.teammate);
            kinds_.push_back(jd.kind);
            seen.push_back(false);
        }
        const std::size_t mate = mit->second;
        if (!seen[mate]) {
            kinds_[mate] = jd.kind;
            seen[mate] = true;
        } else if (kinds_[mate] != jd.kind) {
            throw ValidationError(prefix + "teammate '" + jd.teammate + "' changes kind");
        }
        auto& slot = rows[{cit->second, mate}];
        if (jd.kind == Kind::machine && !slot.empty()) {
            throw ValidationError(prefix + "duplicate instance: machine teammate '" + jd.teammate +
                                  "' already judged test case '" + jd.test_case + "'");
        }
        slot.push_back(j);
    }
    for (std::size_t m = 0; m < teammates_.size(); ++m) {
        if (!seen[m]) throw ValidationError("teammate '" + teammates_[m] + "' has no judgments");
    }

    // Instances: replicate count per case is the largest row count of any
    // teammate; single-row teammates are shared by every replicate.
    const std::size_t n_mates = teammates_.size();
    std::vector<std::size_t> replicates(cases_.size(), 0);
    for (const auto& [key, idx] : rows) {
        replicates[key.first] = std::max(replicates[key.first], idx.size());
    }
    case_instance_start_.assign(cases_.size() + 1, 0);
    for (std::size_t c = 0; c < cases_.size(); ++c) {
        case_instance_start_[c] = instances_.size();
        for (std::size_t r = 0; r < replicates[c]; ++r) {
            instances_.push_back({c, static_cast<int>(r)});
            case_instance_list_.push_back(instances_.size() - 1);
        }
    }
    case_instance_start_[cases_.size()] = instances_.size();
    cell_.assign(instances_.size() * n_mates, -1);
    for (const auto& [key, idx] : rows) {
        const auto [c, mate] = key;
        const std::size_t first = case_instance_start_[c];
        for (std::size_t r = 0; r < replicates[c]; ++r) {
            long j = -1;
            if (idx.size() == 1) {
                j = static_cast<long>(idx[0]);
            } else if (r < idx.size()) {
                j = static_cast<long>(idx[r]);
            }
            cell_[(first + r) * n_mates + mate] = j;
        }
    }
}

int Dataset::truth_of(const std::string& test_case) const {
    auto it = case_lookup_.find(test_case);
    if (it == case_lookup_.end()) throw ValidationError("unknown test case '" + test_case + "'");
    return truth_[it->second];
}

std::string Dataset::instance_id(std::size_t instance) const {
    const auto& inst = instances_.at(instance);
    return cases_[inst.case_index] + "#" + std::to_string(inst.replicate);
}

std::optional<std::size_t> Dataset::find_teammate(std::string_view name) const {
    for (std::size_t i = 0; i < teammates_.size(); ++i) {
        if (teammates_[i] == name) return i;
    }
    return std::nullopt;
}

std::size_t Dataset::teammate_index(std::string_view name) const {
    if (auto idx = find_teammate(name)) return *idx;
    std::string known;
    for (const auto& t : teammates_) known += (known.empty() ? "" : ", ") + t;
    throw ValidationError("unknown teammate '" + std::string(name) + "'; known teammates: " + known);
}

std::optional<std::size_t> Dataset::find_case(std::string_view test_case) const {
    auto it = case_lookup_.find(std::string(test_case));
    if (it == case_lookup_.end()) return std::nullopt;
    return it->second;
}

const Judgment* Dataset::lookup(std::size_t instance, std::size_t teammate) const {
    const long j = cell_[instance * teammates_.size() + teammate];
    return j < 0 ? nullptr : &judgments_[static_cast<std::size_t>(j)];
}

std::span<const std::size_t> Dataset::instances_of_case(std::size_t case_index) const {
    const auto first = case_instance_start_[case_index];
    const auto last = case_instance_start_[case_index + 1];
    return std::span<const std::size_t>(case_instance_list_).subspan(first, last - first);
}

std::vector<const Judgment*> Dataset::judgments_of(std::size_t teammate) const {
    std::vector<const Judgment*> out;
    for (const auto& j : judgments_) {
        if (j.teammate == teammates_[teammate]) out.push_back(&j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Teams
// ---------------------------------------------------------------------------

bool TeamSpec::contains(std::size_t teammate) const {
    return std::find(members.begin(), members.end(), teammate) != members.end();
}

TeamSpec make_team(const Dataset& dataset, const std::vector<std::string>& names) {
    if (names.empty()) throw ValidationError("a team needs at least one member");
    TeamSpec team;
    for (const auto& name : names) {
        const auto idx = dataset.teammate_index(name);
        if (team.contains(idx)) throw ValidationError("teammate '" + name + "' listed twice");
        team.members.push_back(idx);
    }
    std::sort(team.members.begin(), team.members.end());
    return team;
}

std::vector<std::string> team_names(const Dataset& dataset, const TeamSpec& team) {
    std::vector<std::string> out;
    for (auto m : team.members) out.push_back(dataset.teammates()[m]);
    return out;
}

std::string team_label(const Dataset& dataset, const TeamSpec& team) {
    std::string out;
    for (auto m : team.members) out += (out.empty() ? "" : "+") + dataset.teammates()[m];
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

Dataset parse_csv_dataset(std::string_view judgments_text, std::string_view truth_text,
                          std::optional<int> num_classes) {
    const auto truth_lines = csv_lines(truth_text);
    if (truth_lines.empty()) throw ParseError("ground-truth CSV is empty");
    {
        const auto header = split_csv_line(truth_lines.front().second, truth_lines.front().first);
        if (header.size() != 2 || header[0] != "test_case" || header[1] != "true_label") {
            throw ParseError("ground-truth CSV header must be 'test_case,true_label'");
        }
    }
    std::vector<std::pair<std::string, int>> truth;
    int max_label = 0;
    for (std::size_t i = 1; i < truth_lines.size(); ++i) {
        const auto [row, line] = truth_lines[i];
        const auto f = split_csv_line(line, row);
        if (f.size() != 2) throw ParseError("truth " + row_prefix(row) + "expected 2 fields, got " + std::to_string(f.size()));
        const int label = parse_label(f[1], row, "true_label");
        if (label < 0) throw ValidationError("truth " + row_prefix(row) + "negative label");
        max_label = std::max(max_label, label);
        truth.emplace_back(f[0], label);
    }

    const auto lines = csv_lines(judgments_text);
    if (lines.empty()) throw ParseError("judgments CSV is empty");
    const auto header = split_csv_line(lines.front().second, lines.front().first);
    static const char* required[] = {"test_case", "teammate", "kind", "choice", "confidence"};
    if (header.size() < 5) throw ParseError("judgments CSV header must start with test_case,teammate,kind,choice,confidence");
    for (std::size_t i = 0; i < 5; ++i) {
        if (header[i] != required[i]) {
            throw ParseError("judgments CSV header column " + std::to_string(i + 1) + " must be '" + required[i] + "'");
        }
    }
    const std::size_t n_scores = header.size() - 5;
    for (std::size_t k = 0; k < n_scores; ++k) {
        if (header[5 + k] != "score_" + std::to_string(k)) {
            throw ParseError("judgments CSV header column " + std::to_string(6 + k) + " must be 'score_" +
                             std::to_string(k) + "'");
        }
    }

    std::vector<Judgment> judgments;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto [row, line] = lines[i];
        const auto f = split_csv_line(line, row);
        if (f.size() != header.size()) {
            throw ParseError(row_prefix(row) + "expected " + std::to_string(header.size()) + " fields, got " +
                             std::to_string(f.size()));
        }
        Judgment j;
        j.source_row = row;
        j.test_case = f[0];
        j.teammate = f[1];
        if (j.test_case.empty() || j.teammate.empty()) throw ParseError(row_prefix(row) + "empty identifier");
        try {
            j.kind = parse_kind(f[2]);
        } catch (const ParseError& e) {
            throw ParseError(row_prefix(row) + e.what());
        }
        j.choice = parse_label(f[3], row, "choice");
        j.confidence = parse_number(f[4], row, "confidence");
        const bool any = std::any_of(f.begin() + 5, f.end(), [](const std::string& s) { return !s.empty(); });
        if (any) {
            for (std::size_t k = 0; k < n_scores; ++k) {
                if (f[5 + k].empty()) throw ParseError(row_prefix(row) + "partially filled class scores");
                j.class_scores.push_back(parse_number(f[5 + k], row, "class score"));
            }
        }
        max_label = std::max(max_label, j.choice);
        judgments.push_back(std::move(j));
    }

    int classes = n_scores > 0 ? static_cast<int>(n_scores) : std::max(2, max_label + 1);
    if (num_classes) {
        if (n_scores > 0 && *num_classes != classes) {
            throw ValidationError("class count " + std::to_string(*num_classes) + " disagrees with " +
                                  std::to_string(n_scores) + " score columns");
        }
        classes = *num_classes;
    }
    return Dataset(classes, std::move(truth), std::move(judgments));
}

std::string judgments_csv(const Dataset& dataset) {
    const bool with_scores = std::any_of(dataset.judgments().begin(), dataset.judgments().end(),
                                         [](const Judgment& j) { return !j.class_scores.empty(); });
    std::string out = "test_case,teammate,kind,choice,confidence";
    if (with_scores) {
        for (int k = 0; k < dataset.num_classes(); ++k) out += ",score_" + std::to_string(k);
    }
    out += '\n';
    for (const auto& j : dataset.judgments()) {
        out += quote_csv(j.test_case) + ',' + quote_csv(j.teammate) + ',' + std::string(to_string(j.kind)) + ',' +
               std::to_string(j.choice) + ',' + format_double(j.confidence);
        if (with_scores) {
            for (int k = 0; k < dataset.num_classes(); ++k) {
                out += ',';
                if (!j.class_scores.empty()) out += format_double(j.class_scores[k]);
            }
        }
        out += '\n';
    }
    return out;
}

std::string truth_csv(const Dataset& dataset) {
    std::string out = "test_case,true_label\n";
    for (std::size_t c = 0; c < dataset.test_cases().size(); ++c) {
        out += quote_csv(dataset.test_cases()[c]) + ',' + std::to_string(dataset.truth(c)) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON bundle
// ---------------------------------------------------------------------------

Dataset parse_json_dataset(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON bundle: ") + e.what());
    }
    try {
        const int classes = doc.at("L").get<int>();
        std::vector<std::pair<std::string, int>> truth;
        for (const auto& t : doc.at("truth")) {
            truth.emplace_back(t.at("test_case").get<std::string>(), t.at("true_label").get<int>());
        }
        std::vector<std::string> order;
        if (doc.contains("teammates")) order = doc.at("teammates").get<std::vector<std::string>>();
        std::vector<Judgment> judgments;
        std::size_t index = 0;
        for (const auto& jj : doc.at("judgments")) {
            ++index;
            Judgment j;
            j.test_case = jj.at("test_case").get<std::string>();
            j.teammate = jj.at("teammate").get<std::string>();
            j.kind = parse_kind(jj.at("kind").get<std::string>());
            j.choice = jj.at("choice").get<int>();
            j.confidence = jj.at("confidence").get<double>();
            if (jj.contains("class_scores")) j.class_scores = jj.at("class_scores").get<std::vector<double>>();
            if (jj.contains("tie")) j.tie = jj.at("tie").get<bool>();
            j.source_row = index;
            judgments.push_back(std::move(j));
        }
        return Dataset(classes, std::move(truth), std::move(judgments), std::move(order));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed JSON bundle: ") + e.what());
    }
}

std::string dataset_json(const Dataset& dataset, const std::map<std::string, std::string>& metadata) {
    nlohmann::ordered_json doc;
    doc["L"] = dataset.num_classes();
    doc["teammates"] = dataset.teammates();
    auto truth = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < dataset.test_cases().size(); ++c) {
        truth.push_back({{"test_case", dataset.test_cases()[c]}, {"true_label", dataset.truth(c)}});
    }
    doc["truth"] = std::move(truth);
    auto judgments = nlohmann::ordered_json::array();
    for (const auto& j : dataset.judgments()) {
        nlohmann::ordered_json jj{{"test_case", j.test_case},
                                  {"teammate", j.teammate},
                                  {"kind", std::string(to_string(j.kind))},
                                  {"choice", j.choice},
                                  {"confidence", j.confidence}};
        if (!j.class_scores.empty()) jj["class_scores"] = j.class_scores;
        if (j.tie) jj["tie"] = true;
        judgments.push_back(std::move(jj));
    }
    doc["judgments"] = std::move(judgments);
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    for (const auto& [k, v] : metadata) meta[k] = v;
    doc["metadata"] = std::move(meta);
    return doc.dump(2) + '\n';
}

Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
    DataFormat format = options.format;
    if (format == DataFormat::automatic) format = path.extension() == ".json" ? DataFormat::json : DataFormat::csv;
    const std::string text = read_file(path);
    if (format == DataFormat::json) return parse_json_dataset(text);
    if (!options.truth) throw ValidationError("judgments CSV " + path.string() + " needs a ground-truth CSV");
    return parse_csv_dataset(text, read_file(*options.truth), options.num_classes);
}

void save_dataset_csv(const Dataset& dataset, const std::filesystem::path& judgments_path,
                      const std::filesystem::path& truth_path) {
    write_file(judgments_path, judgments_csv(dataset));
    write_file(truth_path, truth_csv(dataset));
}

void save_dataset_json(const Dataset& dataset, const std::filesystem::path& path,
                       const std::map<std::string, std::string>& metadata) {
    write_file(path, dataset_json(dataset, metadata));
}

// ---------------------------------------------------------------------------
// Judgment conversions
// ---------------------------------------------------------------------------

int discretize_confidence(double raw) {
    if (!std::isfinite(raw) || raw < 0.0 || raw > 100.0) {
        throw InputError("slider confidence " + format_double(raw) + " outside [1, 100]");
    }
    if (raw < 1.0) warn("slider confidence " + format_double(raw) + " below 1 mapped to the lowest bin");
    if (raw <= 33.0) return 0;
    if (raw <= 66.0) return 1;
    return 2;
}

PerplexityJudgment perplexity_to_choice_confidence(double q0, double q1) {
    if (!std::isfinite(q0) || !std::isfinite(q1)) throw InputError("perplexities must be finite");
    PerplexityJudgment out;
    out.choice = q1 < q0 ? 1 : 0;
    out.confidence = std::abs(q0 - q1);
    out.tie = q0 == q1;
    return out;
}

std::vector<double> softmax_scores(std::span<const double> q) {
    if (q.empty()) throw InputError("softmax of an empty vector");
    for (double v : q) {
        if (!std::isfinite(v)) throw InputError("softmax input must be finite");
    }
    const double lowest = *std::min_element(q.begin(), q.end());
    std::vector<double> out(q.size());
    double total = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        out[i] = std::exp(lowest - q[i]);
        total += out[i];
    }
    for (double& v : out) v /= total;
    return out;
}

}  // namespace teamfuse
