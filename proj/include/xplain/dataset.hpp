#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "xplain/instance.hpp"

namespace xplain::dataset {

inline constexpr std::size_t kConceptCount = 50;
inline constexpr std::size_t kTopK = 5;

// One record per line. Blank lines are skipped. Throws SchemaError (with
// the 1-based line) on malformed records.
std::vector<ExplanationInstance> parse_instances(std::istream& in);
std::vector<ExplanationInstance> read_instances(const std::filesystem::path& path);

void write_instances(std::ostream& out, const std::vector<ExplanationInstance>& instances);
// Writes through a temporary file and renames it into place.
void write_instances(const std::filesystem::path& path, const std::vector<ExplanationInstance>& instances);

struct Violation {
    std::string code;   // e.g. topk_mismatch, concept_count
    std::string field;
    std::string message;
};

std::vector<Violation> validate(const ExplanationInstance& inst);

struct WordMeans {
    std::size_t count = 0;
    double why = 0.0;
    double why_not = 0.0;
    double whole = 0.0;
};

struct DatasetStats {
    std::map<std::string, WordMeans> splits;
    WordMeans overall;
};

// Words are whitespace-delimited tokens; the whole explanation is why + " " + why_not.
// `split_of` (empty, or parallel to `instances`) assigns split names.
DatasetStats word_count_stats(const std::vector<ExplanationInstance>& instances,
                              const std::vector<std::string>& split_of = {});

// Explicit id when present, otherwise a hash of the normalized question text.
std::string question_id(const ExplanationInstance& inst);

using SplitManifest = std::map<std::string, std::string>;  // question id -> split name

// Lines of `question-id <TAB> split`; '#' starts a comment.
SplitManifest parse_manifest(std::istream& in);
SplitManifest read_manifest(const std::filesystem::path& path);

// Exact partition by manifest. Throws ArgumentError on an empty manifest or an unmapped question.
std::map<std::string, std::vector<ExplanationInstance>> split_dataset(const std::vector<ExplanationInstance>& instances,
                                                                      const SplitManifest& manifest);

// Optional path to the released dataset, read from XPLAIN_RELEASED_DATASET.
std::filesystem::path released_dataset_path();

}  // namespace xplain::dataset
