#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tpool/pool.hpp"
#include "tpool/tensor.hpp"

namespace tpool {

enum class TaskKind : std::uint8_t { kOrder = 0, kBag = 1 };

const char* task_name(TaskKind k);

// Labeled feature sequences, single precision, [N x T x D] row-major.
//
// order task: every sample carries both marker rows a and b at two distinct
// random positions among standard-normal noise rows; the label says which
// marker comes first. The multiset of rows is label-independent, so a
// permutation-invariant pooler sits at 50% by construction.
//
// bag task: exactly one of the markers is present, anywhere; the label says
// which one. Order-free, average-pool separable.
struct SyntheticDataset {
    std::uint32_t n = 0;
    std::uint32_t T = 0;
    std::uint32_t D = 0;
    std::uint32_t n_classes = 0;
    TaskKind task = TaskKind::kOrder;
    std::uint64_t seed = 0;  // generation provenance; not serialized

    std::vector<std::uint32_t> labels;  // [N]
    std::vector<float> features;        // [N * T * D]

    const float* sample(std::size_t i) const { return features.data() + std::size_t(i) * T * D; }

    template <class S>
    TemporalFeatures<S> sample_features(std::size_t i) const {
        std::vector<S> data(std::size_t(T) * D);
        const float* src = sample(i);
        for (std::size_t k = 0; k < data.size(); ++k) data[k] = static_cast<S>(src[k]);
        return TemporalFeatures<S>(Tensor<S>::from_data({T, D}, std::move(data)));
    }

    double class_balance() const;  // fraction of label-0 samples
};

// markers: fixed orthogonal unit vectors scaled by kMarkerScale
inline constexpr float kMarkerScale = 3.0f;
std::vector<float> marker_a(std::size_t d);
std::vector<float> marker_b(std::size_t d);

SyntheticDataset gen_order_task(std::size_t n, std::size_t T, std::size_t D, std::uint64_t seed);
SyntheticDataset gen_bag_task(std::size_t n, std::size_t T, std::size_t D, std::uint64_t seed);

// TPF1 container, fixed little-endian layout:
//   magic 'TPF1' | u16 version=1 | u32 N,T,D,n_classes | u8 dtype=0 (f32)
//   | u8 task | u32 labels[N] | f32 features[N*T*D]
void write_dataset(const SyntheticDataset& ds, const std::string& path);
SyntheticDataset read_dataset(const std::string& path);

std::vector<std::uint8_t> serialize_dataset(const SyntheticDataset& ds);
SyntheticDataset deserialize_dataset(const std::vector<std::uint8_t>& bytes);

}  // namespace tpool
