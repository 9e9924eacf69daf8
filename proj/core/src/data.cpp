#include "sril/data.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "sril/rng.hpp"

namespace sril {

Tensor Dataset::batch(const std::vector<int>& indices) const {
    const std::size_t ss = sample_size();
    Shape shape{static_cast<int>(indices.size())};
    shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
    std::vector<double> buf(indices.size() * ss);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || static_cast<std::size_t>(idx) >= size())
            throw TensorError("Dataset::batch: index " + std::to_string(idx) + " out of range");
        std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(idx * ss), ss,
                    buf.begin() + static_cast<std::ptrdiff_t>(i * ss));
    }
    return Tensor::from(std::move(shape), std::move(buf));
}

std::vector<int> Dataset::indices_of_class(int label) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) out.push_back(static_cast<int>(i));
    return out;
}

std::pair<Dataset, Dataset> make_blobs(const BlobsConfig& cfg) {
    RngStream center_rng(derive_seed(cfg.seed, "blobs.centers"));
    std::vector<std::vector<double>> centers(cfg.classes, std::vector<double>(cfg.dim));
    for (auto& c : centers) {
        double s = 0.0;
        for (double& v : c) {
            v = center_rng.normal();
            s += v * v;
        }
        const double nrm = std::sqrt(s);
        for (double& v : c) v /= nrm > 0 ? nrm : 1.0;
    }
    auto fill = [&](Dataset& ds, int per_class, const char* split) {
        ds.id = "blobs:" + std::to_string(cfg.classes) + "x" + std::to_string(cfg.dim) + ":" +
                std::to_string(cfg.seed) + ":" + split;
        ds.sample_shape = {cfg.dim};
        ds.num_classes = cfg.classes;
        RngStream rng(derive_seed(cfg.seed, std::string("blobs.") + split));
        for (int c = 0; c < cfg.classes; ++c)
            for (int i = 0; i < per_class; ++i) {
                for (int d = 0; d < cfg.dim; ++d)
                    ds.features.push_back(centers[c][d] + cfg.spread * rng.normal());
                ds.labels.push_back(c);
            }
    };
    Dataset train, test;
    fill(train, cfg.train_per_class, "train");
    fill(test, cfg.test_per_class, "test");
    return {std::move(train), std::move(test)};
}

std::pair<Dataset, Dataset> make_rings(const RingsConfig& cfg) {
    auto fill = [&](Dataset& ds, int per_class, const char* split) {
        ds.id = "rings:" + std::to_string(cfg.classes) + ":" + std::to_string(cfg.seed) + ":" + split;
        ds.sample_shape = {2};
        ds.num_classes = cfg.classes;
        RngStream rng(derive_seed(cfg.seed, std::string("rings.") + split));
        for (int c = 0; c < cfg.classes; ++c)
            for (int i = 0; i < per_class; ++i) {
                const double theta = 2.0 * 3.141592653589793 * rng.uniform();
                const double r = cfg.radius_step * (c + 1) + cfg.spread * rng.normal();
                ds.features.push_back(r * std::cos(theta));
                ds.features.push_back(r * std::sin(theta));
                ds.labels.push_back(c);
            }
    };
    Dataset train, test;
    fill(train, cfg.train_per_class, "train");
    fill(test, cfg.test_per_class, "test");
    return {std::move(train), std::move(test)};
}

namespace {

std::uint32_t read_be32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream imgs(images_path, std::ios::binary);
    if (!imgs) throw TensorError("cannot open IDX images: " + images_path);
    if (read_be32(imgs) != 0x803) throw TensorError("bad IDX image magic in " + images_path);
    const std::uint32_t n = read_be32(imgs), h = read_be32(imgs), w = read_be32(imgs);

    std::ifstream labs(labels_path, std::ios::binary);
    if (!labs) throw TensorError("cannot open IDX labels: " + labels_path);
    if (read_be32(labs) != 0x801) throw TensorError("bad IDX label magic in " + labels_path);
    const std::uint32_t nl = read_be32(labs);
    if (n != nl)
        throw TensorError("IDX image/label count mismatch: " + std::to_string(n) + " vs " +
                          std::to_string(nl));

    Dataset ds;
    ds.id = "idx:" + images_path;
    ds.sample_shape = {1, static_cast<int>(h), static_cast<int>(w)};
    ds.features.resize(static_cast<std::size_t>(n) * h * w);
    std::vector<unsigned char> row(h * w);
    for (std::uint32_t i = 0; i < n; ++i) {
        imgs.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
        for (std::size_t j = 0; j < row.size(); ++j)
            ds.features[static_cast<std::size_t>(i) * h * w + j] = row[j] / 255.0;
        unsigned char lab;
        labs.read(reinterpret_cast<char*>(&lab), 1);
        ds.labels.push_back(lab);
    }
    if (!imgs || !labs) throw TensorError("truncated IDX files: " + images_path);
    for (int l : ds.labels) ds.num_classes = std::max(ds.num_classes, l + 1);
    return ds;
}

Dataset load_csv(const std::string& path, const std::string& label_column) {
    std::ifstream is(path);
    if (!is) throw TensorError("cannot open CSV: " + path);
    std::string line;
    if (!std::getline(is, line)) throw TensorError("empty CSV: " + path);

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        std::istringstream ss(s);
        while (std::getline(ss, cur, ',')) out.push_back(cur);
        return out;
    };
    const auto header = split(line);
    int label_col = -1;
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == label_column) label_col = static_cast<int>(i);
    if (label_col < 0) throw TensorError("CSV has no column named '" + label_column + "': " + path);

    Dataset ds;
    ds.id = "csv:" + path;
    const int dim = static_cast<int>(header.size()) - 1;
    ds.sample_shape = {dim};
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != header.size())
            throw TensorError("CSV row " + std::to_string(lineno) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(header.size()));
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (static_cast<int>(i) == label_col)
                ds.labels.push_back(std::stoi(cells[i]));
            else
                ds.features.push_back(std::stod(cells[i]));
        }
    }
    for (int l : ds.labels) ds.num_classes = std::max(ds.num_classes, l + 1);
    return ds;
}

}  // namespace sril
