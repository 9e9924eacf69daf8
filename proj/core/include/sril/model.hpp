#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "sril/ops.hpp"
#include "sril/rng.hpp"
#include "sril/tensor.hpp"

namespace sril {

// Intermediate feature exposed by a backbone stage. Shape is (B, C, S) with
// S the flattened spatial extent; fully-connected stages group their hidden
// units into channels of width 4 so per-channel normalization stays
// meaningful. After a backward pass, value.grad() holds d(loss)/d(tap).
struct FeatureTap {
    std::string layer_id;
    Tensor value;
};

struct BackboneConfig {
    std::string arch = "mlp-s";  // "mlp-s" or "conv-s"
    int input_dim = 2;           // mlp-s
    int in_channels = 1;         // conv-s
    int height = 16;
    int width = 16;
};

// Three-stage backbone with one feature tap per stage. mlp-s: 3 hidden
// layers of width 64. conv-s: 3x3 convs of 16/32/64 channels, each followed
// by ReLU and 2x average pooling. The embedding is the flattened final
// stage, L2-normalized.
class Backbone {
  public:
    Backbone() = default;
    Backbone(BackboneConfig cfg, RngStream& rng);

    const BackboneConfig& config() const { return cfg_; }
    int num_stages() const { return 3; }
    int embed_dim() const;
    int stage_channels(int stage) const;
    int stage_spatial(int stage) const;  // S at the tap of `stage`

    std::vector<Tensor>& params() { return params_; }
    const std::vector<Tensor>& params() const { return params_; }

    std::pair<Tensor, std::vector<FeatureTap>> forward_with_taps(const Tensor& batch) const;

    // Resume the forward pass from a (B, C, S) value substituted for the tap
    // of `stage`; returns the normalized embedding. Used by gradient oracles
    // that differentiate the downstream loss with respect to a tap.
    Tensor forward_from_tap(int stage, const Tensor& tap_value) const;

    Backbone clone() const;

  private:
    BackboneConfig cfg_;
    std::vector<Tensor> params_;  // mlp: W1,b1,W2,b2,W3,b3; conv: w1,b1,w2,b2,w3,b3
};

// Expandable proxy head: K proxies per class, logits are softmax-weighted
// averages of proxy similarities. eta is used as |eta_raw|.
struct LSCHead {
    Tensor proxies;  // (num_classes*K, embed_dim)
    Tensor eta_raw;  // scalar
    double margin = 0.6;
    int K = 10;
    int num_classes = 0;
    int embed_dim = 0;

    double eta() const { return std::abs(eta_raw.item()); }
    // Row-wise renormalization of proxy vectors; applied after each
    // optimizer step, outside the tape.
    void renormalize_proxies();
    LSCHead clone() const;
};

LSCHead make_lsc_head(int num_classes, int K, int embed_dim, double margin, RngStream& rng);

// Appends K freshly initialized unit-norm proxies per new class; existing
// proxy values are preserved bit-for-bit.
void expand_head(LSCHead& head, int new_class_count, RngStream& rng);

// z: (B, embed_dim), L2-normalized rows -> per-class scores (B, num_classes).
Tensor lsc_logits(const LSCHead& head, const Tensor& z);

struct Model {
    Backbone backbone;
    LSCHead head;

    std::vector<Tensor> parameters();  // backbone params, proxies, eta_raw (stable order)
    std::vector<Tensor> parameters() const;
    Model clone() const;
    void set_requires_grad(bool v);

    std::pair<Tensor, std::vector<FeatureTap>> forward_with_taps(const Tensor& batch) const {
        return backbone.forward_with_taps(batch);
    }
    // embedding + logits in one pass
    Tensor logits(const Tensor& batch) const;
};

Model make_model(const BackboneConfig& cfg, int num_classes, int K, double margin, RngStream& rng);

// Value-independent frozen deep copy (requires_grad off everywhere).
Model snapshot(const Model& m);

struct ModelPair {
    Model old_model;  // frozen
    Model new_model;  // trainable
};

// Little-endian flat binary container of named f64 arrays.
void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

// FNV-1a over all parameter bytes; used for immutability checks.
std::uint64_t param_hash(const Model& m);

}  // namespace sril
