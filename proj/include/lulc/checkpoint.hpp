#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lulc/network.hpp"
#include "lulc/tensor.hpp"

namespace lulc {

// ---------------------------------------------------------------------------
// Generic manifest+blob container.
//
// Layout (all text lines '\n'-terminated, then raw payload bytes):
//
//   LULC-CONTAINER 1 <kind>
//   <manifest line>*
//   blob <name> <f32|f64> <rank> <extent>* <offset> <nbytes>
//   END
//   <raw little-endian blob data, offsets relative to the byte after "END\n">
//
// Both network checkpoints (kind "checkpoint") and SVM models
// (kind "svm") use this container.

struct ContainerBlob {
    std::string name;
    Dtype dtype = Dtype::f32;
    std::vector<int> shape;
    std::string bytes;
};

struct Container {
    std::string kind;
    std::vector<std::string> manifest;  // free-form lines owned by the payload kind
    std::vector<ContainerBlob> blobs;
};

std::string encode_container(const Container& c);
Container decode_container(const std::string& bytes);
void save_container(const Container& c, const std::filesystem::path& path);
Container load_container(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Network checkpoints

struct CheckpointMeta {
    std::int64_t iterations = 0;
    std::array<double, 3> mean{0, 0, 0};  // per-channel training mean in [0,1]
};

struct Checkpoint {
    NetworkSpec spec;
    std::map<std::string, Tensor<float>> blobs;
    CheckpointMeta meta;
};

Checkpoint make_checkpoint(const Network<float>& net, CheckpointMeta meta = {});

/// Validates that the blob set matches the spec's learnable units, with
/// matching shapes, and returns the runnable network.
Network<float> to_network(const Checkpoint& ckpt);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Serialized layer line as used in the checkpoint manifest.
std::string layer_desc_line(const LayerDesc& d);
LayerDesc parse_layer_desc_line(const std::string& line);

/// Replaces the final fully-connected layer with a freshly initialized
/// one of new_num_classes units. Every other blob is copied bit-identical.
/// Head lr_mult is set to head_lr_mult and every other learnable layer to
/// body_lr_mult; head_lr_mult <= body_lr_mult is allowed but reported via
/// *warnings. Meta iterations reset to 0; the stored mean is kept.
Checkpoint replace_head(const Checkpoint& ckpt, int new_num_classes, float head_lr_mult,
                        float body_lr_mult, std::uint64_t init_seed,
                        std::vector<std::string>* warnings = nullptr);

}  // namespace lulc
