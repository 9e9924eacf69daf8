#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sril/data.hpp"
#include "sril/model.hpp"

namespace sril {

// Class-incremental scenario: a seeded class permutation split into an
// initial task plus fixed-size increments. Head indices are positions in
// learning order (task 0's classes come first).
struct Scenario {
    std::vector<int> class_order;          // permutation of dataset labels
    int initial_task_size = 0;
    int increment = 0;
    std::vector<std::vector<int>> tasks;   // dataset labels per task
    std::vector<int> head_index;           // dataset label -> head index
    std::vector<int> label_of_head;        // head index -> dataset label

    int num_tasks() const { return static_cast<int>(tasks.size()); }
    int num_increments() const { return num_tasks() - 1; }
    // n^{1:t}: classes seen once tasks 0..t are learned
    int classes_through(int t) const;
    int task_of_head_index(int head_idx) const;
};

Scenario build_scenario(int num_classes, int initial_task_size, int increment, std::uint64_t seed);

// Per-class herding-ordered exemplar indices into the training set.
struct ExemplarStore {
    int per_class_budget = 20;
    std::string dataset_id;
    std::map<int, std::vector<int>> indices_by_class;  // dataset label -> sample indices

    std::vector<int> all_indices() const;
    void save(const std::string& path) const;
    static ExemplarStore load(const std::string& path);
};

// Greedy mean-matching selection over L2-normalized feature rows. At step k
// the unchosen sample minimizing || mu - (sum_chosen + phi(x)) / k || is
// taken; ties break to the lowest index. Returns min(m, n) indices.
std::vector<int> herding_select(const std::vector<std::vector<double>>& features, int m);

// Batched no-grad embeddings (already L2-normalized by the model).
std::vector<std::vector<double>> embed_samples(const Model& model, const Dataset& ds,
                                               const std::vector<int>& indices);

// New classes are herded with the current model's embeddings; existing
// classes keep their lists, truncated to the budget (herding order makes any
// prefix a valid smaller selection).
void update_exemplars(ExemplarStore& store, const Dataset& train, const std::vector<int>& new_classes,
                      const Model& model, int budget);

struct NmeClassifier {
    // per seen head index: L2-normalized mean of normalized exemplar embeddings
    std::vector<std::vector<double>> means;
};

NmeClassifier build_nme(const Model& model, const Dataset& train, const ExemplarStore& store,
                        const Scenario& scenario, int tasks_seen);

// Nearest class mean in Euclidean distance; ties -> lowest class index.
int nme_classify(const NmeClassifier& nme, const std::vector<double>& query_embedding);

enum class EvalHead { cnn, nme };

struct EvalResult {
    std::vector<double> per_task;   // accuracy on each seen task's test split
    std::vector<int> per_task_count;
    double overall = 0.0;           // accuracy over all seen classes
};

EvalResult evaluate(const Model& model, const Dataset& test, const Scenario& scenario, int tasks_seen,
                    EvalHead head, const ExemplarStore* store = nullptr,
                    const Dataset* train = nullptr);

}  // namespace sril
