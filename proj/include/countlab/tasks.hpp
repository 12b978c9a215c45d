// Synthetic counting-task generation and prompt rendering for the four
// baselines: {unstructured, structured} x {without steps, with steps}.
#pragma once

#include <fstream>
#include <optional>
#include <regex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "countlab/numerics.hpp"
#include "countlab/prompts.hpp"
#include "countlab/rng.hpp"
#include "countlab/tokenizer.hpp"

namespace countlab {

struct GenerationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Structure : uint8_t { Unstructured, Structured };
enum class Steps : uint8_t { NoSteps, WithSteps };

inline std::string mode_name(Structure s, Steps st) {
    std::string out = s == Structure::Structured ? "structured" : "unstructured";
    out += st == Steps::WithSteps ? "_steps" : "_no_steps";
    return out;
}

struct CountingTask {
    std::string item;
    std::vector<int> partition_sizes;
    int total = 0;
    Structure structure = Structure::Unstructured;
    Steps steps = Steps::NoSteps;
    uint64_t seed = 0;
    // Set when the adjusted final partition fell below the requested minimum.
    bool tail_adjusted_below_lo = false;

    nlohmann::json to_json() const {
        return nlohmann::json{{"item", item},
                              {"sizes", partition_sizes},
                              {"total", total},
                              {"structure", structure == Structure::Structured ? "structured"
                                                                               : "unstructured"},
                              {"steps", steps == Steps::WithSteps},
                              {"seed", seed},
                              {"tail_adjusted_below_lo", tail_adjusted_below_lo}};
    }

    static CountingTask from_json(const nlohmann::json& j) {
        CountingTask t;
        t.item = j.at("item").get<std::string>();
        t.partition_sizes = j.at("sizes").get<std::vector<int>>();
        t.total = j.at("total").get<int>();
        t.structure = j.at("structure").get<std::string>() == "structured"
                          ? Structure::Structured
                          : Structure::Unstructured;
        t.steps = j.at("steps").get<bool>() ? Steps::WithSteps : Steps::NoSteps;
        t.seed = j.at("seed").get<uint64_t>();
        if (j.contains("tail_adjusted_below_lo")) {
            t.tail_adjusted_below_lo = j.at("tail_adjusted_below_lo").get<bool>();
        }
        return t;
    }
};

// Partition sizes drawn uniformly from [lo, hi]; the final partition absorbs
// the remainder and may fall below lo (never below 1) so sizes sum exactly
// to the target.
inline CountingTask gen_structured(const std::string& item, int total, int lo, int hi, Rng& rng,
                                   uint64_t seed = 0) {
    if (lo < 1 || hi < lo) {
        throw GenerationError("gen_structured: need 1 <= lo <= hi");
    }
    if (total < lo) {
        throw GenerationError("gen_structured: total " + std::to_string(total) +
                              " below minimum partition size " + std::to_string(lo));
    }
    CountingTask t;
    t.item = item;
    t.total = total;
    t.structure = Structure::Structured;
    t.seed = seed;
    int remaining = total;
    while (remaining > hi) {
        const int s = rand_range(rng, lo, hi);
        t.partition_sizes.push_back(s);
        remaining -= s;
    }
    t.partition_sizes.push_back(remaining);
    t.tail_adjusted_below_lo = remaining < lo;
    return t;
}

inline CountingTask gen_unstructured(const std::string& item, int n, uint64_t seed = 0) {
    if (n < 1) {
        throw GenerationError("gen_unstructured: need n >= 1");
    }
    CountingTask t;
    t.item = item;
    t.total = n;
    t.partition_sizes = {n};
    t.structure = Structure::Unstructured;
    t.seed = seed;
    return t;
}

// Item list in canonical spacing: ", " within a partition, " | " between.
inline std::string render_items(const CountingTask& task) {
    std::string out;
    for (size_t i = 0; i < task.partition_sizes.size(); ++i) {
        if (i > 0) out += " |";
        for (int j = 0; j < task.partition_sizes[i]; ++j) {
            if (j > 0) out += ",";
            if (!out.empty()) out += " ";
            out += task.item;
        }
    }
    return out;
}

inline std::string render_prompt(const CountingTask& task) {
    std::string_view instructions;
    if (task.structure == Structure::Structured) {
        instructions = task.steps == Steps::WithSteps ? prompts::kStructuredSteps
                                                      : prompts::kStructuredNoSteps;
    } else {
        instructions = task.steps == Steps::WithSteps ? prompts::kUnstructuredSteps
                                                      : prompts::kUnstructuredNoSteps;
    }
    return std::string(instructions) + " " + render_items(task);
}

// The canonical answer text the constructed model is expected to produce
// (used for teacher-forced analysis runs).
inline std::string render_answer(const CountingTask& task) {
    std::string out;
    if (task.steps == Steps::WithSteps) {
        for (size_t i = 0; i < task.partition_sizes.size(); ++i) {
            out += "part " + std::to_string(i + 1) + ": " +
                   std::to_string(task.partition_sizes[i]) + " ";
        }
    }
    out += "Final answer: " + std::to_string(task.total);
    return out;
}

struct ParsedAnswer {
    std::optional<int> final;
    std::vector<std::pair<int, int>> steps;  // (step index, count)
    bool ok = false;
    std::string raw;
};

// Extracts "Final answer: n" and any "partK: n" / "part K: n" pairs. A
// missing final answer leaves ok == false (scored as a parse failure, which
// is distinct from a wrong answer).
inline ParsedAnswer parse_answer(const std::string& generated) {
    ParsedAnswer out;
    out.raw = generated;
    static const std::regex step_re(R"(part\s*(\d+)\s*:\s*(\d+))");
    static const std::regex final_re(R"(Final\s+answer\s*:\s*(\d+))");
    for (auto it = std::sregex_iterator(generated.begin(), generated.end(), step_re);
         it != std::sregex_iterator(); ++it) {
        out.steps.emplace_back(std::stoi((*it)[1]), std::stoi((*it)[2]));
    }
    std::smatch m;
    if (std::regex_search(generated, m, final_re)) {
        out.final = std::stoi(m[1]);
        out.ok = true;
    }
    return out;
}

// JSON Lines serialization: one task per line with its rendered prompt.
inline void save_tasks_jsonl(const std::vector<CountingTask>& tasks, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    for (const CountingTask& t : tasks) {
        nlohmann::json j = t.to_json();
        j["prompt"] = render_prompt(t);
        os << j.dump() << "\n";
    }
}

inline std::vector<CountingTask> load_tasks_jsonl(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open for reading: " + path);
    std::vector<CountingTask> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(CountingTask::from_json(nlohmann::json::parse(line)));
    }
    return out;
}

}  // namespace countlab
