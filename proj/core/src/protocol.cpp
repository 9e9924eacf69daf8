#include "sril/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "sril/rng.hpp"

namespace sril {

int Scenario::classes_through(int t) const {
    int n = 0;
    for (int k = 0; k <= t; ++k) n += static_cast<int>(tasks[k].size());
    return n;
}

int Scenario::task_of_head_index(int head_idx) const {
    int n = 0;
    for (int t = 0; t < num_tasks(); ++t) {
        n += static_cast<int>(tasks[t].size());
        if (head_idx < n) return t;
    }
    throw TensorError("task_of_head_index: index out of range");
}

Scenario build_scenario(int num_classes, int initial_task_size, int increment, std::uint64_t seed) {
    if (initial_task_size < 1 || initial_task_size > num_classes)
        throw TensorError("build_scenario: bad initial task size");
    const int rest = num_classes - initial_task_size;
    if (rest > 0 && (increment < 1 || rest % increment != 0))
        throw TensorError("build_scenario: " + std::to_string(initial_task_size) + " + k*" +
                          std::to_string(increment) + " does not tile " + std::to_string(num_classes) +
                          " classes");
    Scenario sc;
    sc.initial_task_size = initial_task_size;
    sc.increment = increment;
    sc.class_order.resize(num_classes);
    std::iota(sc.class_order.begin(), sc.class_order.end(), 0);
    RngStream rng(derive_seed(seed, "class_order"));
    std::shuffle(sc.class_order.begin(), sc.class_order.end(), rng.engine());

    int pos = 0;
    sc.tasks.emplace_back(sc.class_order.begin(), sc.class_order.begin() + initial_task_size);
    pos = initial_task_size;
    while (pos < num_classes) {
        sc.tasks.emplace_back(sc.class_order.begin() + pos, sc.class_order.begin() + pos + increment);
        pos += increment;
    }
    sc.head_index.assign(num_classes, -1);
    for (int i = 0; i < num_classes; ++i) sc.head_index[sc.class_order[i]] = i;
    sc.label_of_head = sc.class_order;
    return sc;
}

std::vector<int> ExemplarStore::all_indices() const {
    std::vector<int> out;
    for (const auto& [cls, idxs] : indices_by_class)
        out.insert(out.end(), idxs.begin(), idxs.end());
    return out;
}

void ExemplarStore::save(const std::string& path) const {
    nlohmann::json j;
    j["per_class_budget"] = per_class_budget;
    j["dataset_id"] = dataset_id;
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [cls, idxs] : indices_by_class) classes[std::to_string(cls)] = idxs;
    j["classes"] = classes;
    std::ofstream os(path);
    if (!os) throw TensorError("cannot write exemplar store: " + path);
    os << j.dump(2) << "\n";
}

ExemplarStore ExemplarStore::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw TensorError("cannot open exemplar store: " + path);
    nlohmann::json j = nlohmann::json::parse(is);
    ExemplarStore store;
    store.per_class_budget = j.at("per_class_budget").get<int>();
    store.dataset_id = j.at("dataset_id").get<std::string>();
    for (const auto& [key, val] : j.at("classes").items())
        store.indices_by_class[std::stoi(key)] = val.get<std::vector<int>>();
    return store;
}

std::vector<int> herding_select(const std::vector<std::vector<double>>& features, int m) {
    const int n = static_cast<int>(features.size());
    if (n == 0) throw TensorError("herding_select: empty class");
    if (m < 1) throw TensorError("herding_select: budget must be >= 1");
    const std::size_t dim = features[0].size();
    std::vector<double> mu(dim, 0.0);
    for (const auto& f : features)
        for (std::size_t d = 0; d < dim; ++d) mu[d] += f[d];
    for (double& v : mu) v /= n;

    std::vector<int> chosen;
    std::vector<bool> used(n, false);
    std::vector<double> acc(dim, 0.0);  // running sum of chosen features
    const int take = std::min(m, n);
    for (int k = 1; k <= take; ++k) {
        int best = -1;
        double best_dist = 0.0;
        for (int i = 0; i < n; ++i) {
            if (used[i]) continue;
            double dist = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                const double diff = mu[d] - (acc[d] + features[i][d]) / k;
                dist += diff * diff;
            }
            if (best < 0 || dist < best_dist) {  // strict < keeps the lowest index on ties
                best = i;
                best_dist = dist;
            }
        }
        used[best] = true;
        chosen.push_back(best);
        for (std::size_t d = 0; d < dim; ++d) acc[d] += features[best][d];
    }
    return chosen;
}

std::vector<std::vector<double>> embed_samples(const Model& model, const Dataset& ds,
                                               const std::vector<int>& indices) {
    constexpr std::size_t kChunk = 256;
    const int D = model.backbone.embed_dim();
    std::vector<std::vector<double>> out;
    out.reserve(indices.size());
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        std::vector<int> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                               indices.begin() +
                                   static_cast<std::ptrdiff_t>(std::min(start + kChunk, indices.size())));
        Tensor z = model.forward_with_taps(ds.batch(chunk)).first;
        for (std::size_t i = 0; i < chunk.size(); ++i)
            out.emplace_back(z.data().begin() + static_cast<std::ptrdiff_t>(i * D),
                             z.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * D));
    }
    return out;
}

void update_exemplars(ExemplarStore& store, const Dataset& train, const std::vector<int>& new_classes,
                      const Model& model, int budget) {
    store.per_class_budget = budget;
    store.dataset_id = train.id;
    // old classes: keep the herded prefix
    for (auto& [cls, idxs] : store.indices_by_class)
        if (static_cast<int>(idxs.size()) > budget) idxs.resize(budget);
    for (int cls : new_classes) {
        const auto samples = train.indices_of_class(cls);
        const auto feats = embed_samples(model, train, samples);
        const auto order = herding_select(feats, budget);
        std::vector<int> kept;
        kept.reserve(order.size());
        for (int o : order) kept.push_back(samples[o]);
        store.indices_by_class[cls] = std::move(kept);
    }
}

NmeClassifier build_nme(const Model& model, const Dataset& train, const ExemplarStore& store,
                        const Scenario& scenario, int tasks_seen) {
    const int n_seen = scenario.classes_through(tasks_seen - 1);
    const int D = model.backbone.embed_dim();
    NmeClassifier nme;
    nme.means.assign(n_seen, std::vector<double>(D, 0.0));
    for (int h = 0; h < n_seen; ++h) {
        const int cls = scenario.label_of_head[h];
        auto it = store.indices_by_class.find(cls);
        if (it == store.indices_by_class.end() || it->second.empty())
            throw TensorError("build_nme: class " + std::to_string(cls) + " has no exemplars");
        const auto feats = embed_samples(model, train, it->second);
        auto& mean = nme.means[h];
        for (const auto& f : feats)
            for (int d = 0; d < D; ++d) mean[d] += f[d];
        double s = 0.0;
        for (double& v : mean) {
            v /= static_cast<double>(feats.size());
            s += v * v;
        }
        const double nrm = std::sqrt(s);
        if (nrm >= kNormalizeEps)
            for (double& v : mean) v /= nrm;
    }
    return nme;
}

int nme_classify(const NmeClassifier& nme, const std::vector<double>& query_embedding) {
    int best = -1;
    double best_dist = 0.0;
    for (std::size_t c = 0; c < nme.means.size(); ++c) {
        double dist = 0.0;
        for (std::size_t d = 0; d < query_embedding.size(); ++d) {
            const double diff = query_embedding[d] - nme.means[c][d];
            dist += diff * diff;
        }
        if (best < 0 || dist < best_dist) {
            best = static_cast<int>(c);
            best_dist = dist;
        }
    }
    return best;
}

EvalResult evaluate(const Model& model, const Dataset& test, const Scenario& scenario, int tasks_seen,
                    EvalHead head, const ExemplarStore* store, const Dataset* train) {
    EvalResult res;
    NmeClassifier nme;
    if (head == EvalHead::nme) {
        if (!store || !train) throw TensorError("evaluate: nme head needs exemplar store and train set");
        nme = build_nme(model, *train, *store, scenario, tasks_seen);
    }
    int correct_all = 0, total_all = 0;
    for (int t = 0; t < tasks_seen; ++t) {
        std::vector<int> idxs;
        for (int cls : scenario.tasks[t]) {
            auto ci = test.indices_of_class(cls);
            idxs.insert(idxs.end(), ci.begin(), ci.end());
        }
        int correct = 0;
        constexpr std::size_t kChunk = 256;
        for (std::size_t start = 0; start < idxs.size(); start += kChunk) {
            std::vector<int> chunk(idxs.begin() + static_cast<std::ptrdiff_t>(start),
                                   idxs.begin() +
                                       static_cast<std::ptrdiff_t>(std::min(start + kChunk, idxs.size())));
            Tensor z = model.forward_with_taps(test.batch(chunk)).first;
            const int D = model.backbone.embed_dim();
            std::vector<int> pred(chunk.size());
            if (head == EvalHead::cnn) {
                Tensor scores = lsc_logits(model.head, z);
                const int C = model.head.num_classes;
                for (std::size_t i = 0; i < chunk.size(); ++i) {
                    int arg = 0;
                    for (int c = 1; c < C; ++c)
                        if (scores.data()[i * C + c] > scores.data()[i * C + arg]) arg = c;
                    pred[i] = arg;
                }
            } else {
                for (std::size_t i = 0; i < chunk.size(); ++i) {
                    std::vector<double> q(z.data().begin() + static_cast<std::ptrdiff_t>(i * D),
                                          z.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * D));
                    pred[i] = nme_classify(nme, q);
                }
            }
            for (std::size_t i = 0; i < chunk.size(); ++i)
                if (pred[i] == scenario.head_index[test.labels[chunk[i]]]) ++correct;
        }
        res.per_task.push_back(idxs.empty() ? 0.0 : static_cast<double>(correct) / idxs.size());
        res.per_task_count.push_back(static_cast<int>(idxs.size()));
        correct_all += correct;
        total_all += static_cast<int>(idxs.size());
    }
    res.overall = total_all ? static_cast<double>(correct_all) / total_all : 0.0;
    return res;
}

}  // namespace sril
