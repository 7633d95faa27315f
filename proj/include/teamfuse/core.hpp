#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "teamfuse/errors.hpp"

namespace teamfuse {

enum class Kind { human, machine };

std::string_view to_string(Kind kind);
Kind parse_kind(std::string_view text);

// One teammate's choice and confidence on one test case.
struct Judgment {
    std::string test_case;
    std::string teammate;
    Kind kind = Kind::human;
    int choice = 0;
    // Human rating, machine probability/score, or LLM perplexity gap.
    double confidence = 0.0;
    // Per-class machine confidences; empty when absent.
    std::vector<double> class_scores;
    // Set when the choice came from an unresolved perplexity tie.
    bool tie = false;
    // 1-based line number in the source file, 0 when not file-backed.
    std::size_t source_row = 0;
};

// One evaluation unit: a test case together with a replicate number. Humans
// may rate the same test case several times; every replicate is its own
// instance and teammates with a single judgment on the case are shared
// across all of its replicates.
struct Instance {
    std::size_t case_index = 0;
    int replicate = 0;
};

// Immutable, validated collection of judgments plus ground truth.
class Dataset {
public:
    // `truth` keeps its order; it defines the test-case order. When
    // `teammate_order` is empty the order of first appearance is used.
    Dataset(int num_classes,
            std::vector<std::pair<std::string, int>> truth,
            std::vector<Judgment> judgments,
            std::vector<std::string> teammate_order = {});

    int num_classes() const { return num_classes_; }
    bool binary() const { return num_classes_ == 2; }

    const std::vector<std::string>& teammates() const { return teammates_; }
    const std::vector<std::string>& test_cases() const { return cases_; }
    const std::vector<Judgment>& judgments() const { return judgments_; }
    const std::vector<Instance>& instances() const { return instances_; }

    Kind kind(std::size_t teammate) const { return kinds_[teammate]; }
    int truth(std::size_t case_index) const { return truth_[case_index]; }
    int truth_of(const std::string& test_case) const;
    int instance_truth(std::size_t instance) const { return truth_[instances_[instance].case_index]; }
    std::string instance_id(std::size_t instance) const;

    // Throws ValidationError listing the known teammates when `name` is unknown.
    std::size_t teammate_index(std::string_view name) const;
    std::optional<std::size_t> find_teammate(std::string_view name) const;
    std::optional<std::size_t> find_case(std::string_view test_case) const;

    // Judgment of `teammate` on `instance`, or nullptr when it is missing.
    const Judgment* lookup(std::size_t instance, std::size_t teammate) const;

    // Instance indices belonging to one test case, in replicate order.
    std::span<const std::size_t> instances_of_case(std::size_t case_index) const;

    // Judgments of one teammate in file order.
    std::vector<const Judgment*> judgments_of(std::size_t teammate) const;

private:
    int num_classes_;
    std::vector<std::string> cases_;
    std::vector<int> truth_;
    std::unordered_map<std::string, std::size_t> case_lookup_;
    std::vector<Judgment> judgments_;
    std::vector<std::string> teammates_;
    std::vector<Kind> kinds_;
    std::vector<Instance> instances_;
    std::vector<std::size_t> case_instance_start_;
    std::vector<std::size_t> case_instance_list_;
    // instances_.size() x teammates_.size(); -1 marks a missing judgment.
    std::vector<long> cell_;
};

// Nonempty set of teammates, stored as dataset teammate indices in
// dataset order.
struct TeamSpec {
    std::vector<std::size_t> members;

    std::size_t size() const { return members.size(); }
    bool contains(std::size_t teammate) const;
    friend bool operator==(const TeamSpec&, const TeamSpec&) = default;
};

// Resolves names against the dataset. Unknown names, duplicates and empty
// lists raise ValidationError.
TeamSpec make_team(const Dataset& dataset, const std::vector<std::string>& names);
// Names joined with '+', in dataset order.
std::string team_label(const Dataset& dataset, const TeamSpec& team);
std::vector<std::string> team_names(const Dataset& dataset, const TeamSpec& team);

enum class DataFormat { automatic, csv, json };

struct LoadOptions {
    DataFormat format = DataFormat::automatic;
    // Ground-truth CSV; required for judgment CSVs, ignored for JSON bundles.
    std::optional<std::filesystem::path> truth;
    // Overrides the class count inferred from the file.
    std::optional<int> num_classes;
};

Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options = {});

// Parses in-memory CSV text. Exposed for tests and for the loader.
Dataset parse_csv_dataset(std::string_view judgments_csv, std::string_view truth_csv,
                          std::optional<int> num_classes = std::nullopt);
Dataset parse_json_dataset(std::string_view json_text);

std::string judgments_csv(const Dataset& dataset);
std::string truth_csv(const Dataset& dataset);
std::string dataset_json(const Dataset& dataset,
                         const std::map<std::string, std::string>& metadata = {});

void save_dataset_csv(const Dataset& dataset, const std::filesystem::path& judgments_path,
                      const std::filesystem::path& truth_path);
void save_dataset_json(const Dataset& dataset, const std::filesystem::path& path,
                       const std::map<std::string, std::string>& metadata = {});

// Maps a 1..100 slider rating onto {0, 1, 2} with cutpoints 33 and 66.
// 0 is accepted and lands in the lowest bin with a warning.
int discretize_confidence(double raw);

struct PerplexityJudgment {
    int choice = 0;
    double confidence = 0.0;
    bool tie = false;
};

// Picks the option with the lower perplexity; confidence is the absolute gap.
PerplexityJudgment perplexity_to_choice_confidence(double q0, double q1);

// softmax(-q), shifted by the minimum of q for stability.
std::vector<double> softmax_scores(std::span<const double> q);

// Quotes a CSV field when it holds a comma, quote or newline.
std::string csv_field(const std::string& field);
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
double parse_double(std::string_view text);

}  // namespace teamfuse
