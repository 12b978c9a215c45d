// Prompt templates for the four task baselines and the probe context.
// Wording follows the usual instruction blocks for this task family; the
// separator character is spelled out ("a vertical bar") inside instructions
// so the only literal "|" tokens are the partition boundaries themselves.
#pragma once

#include <array>
#include <string_view>

namespace countlab::prompts {

inline constexpr std::array<std::string_view, 16> kItems = {
    "apple", "orange", "peach", "fig",  "mango", "pear", "coconut", "cherry",
    "plum",  "cat",    "dog",   "horse", "rabbit", "whale", "cow",   "frog",
};

inline constexpr std::string_view kUnstructuredNoSteps =
    "You will be given a list of items. Count the total number of objects. "
    "Output the final result exactly in the following format: Final answer: [x]";

inline constexpr std::string_view kUnstructuredSteps =
    "You will be given a list of items. Count the total number of objects. "
    "Let's count step by step. "
    "Output the final result exactly in the following format: Final answer: [x]";

inline constexpr std::string_view kStructuredNoSteps =
    "You will be given multiple partitions of content separated by a vertical bar. "
    "For each partition, count the number of items it contains. "
    "After counting all partitions, compute the total by summing the counts. "
    "Output the final result exactly in the following format: Final answer: [x]";

inline constexpr std::string_view kStructuredSteps =
    "You will be given multiple partitions of content separated by a vertical bar. "
    "For each partition: - Count the number of items it contains. "
    "- Report the count separately using the format: part1: [x1] part2: [x2] ... "
    "After counting all partitions: - Compute the total by summing all individual counts. "
    "- Output the final total exactly in this format: Final answer: [x]";

// Monotypic, question-first blank context for token probing. The probe slot
// (a single item) is appended by the caller.
inline constexpr std::string_view kCountScopeBlank =
    "Answer the question with just a number only (We've separated each group of "
    "items with a vertical bar so you can calculate the final count easier). "
    "Question: How many items are there in the following sentence?";

}  // namespace countlab::prompts
