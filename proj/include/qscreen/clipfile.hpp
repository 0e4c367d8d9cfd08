#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qscreen/tensor.hpp"

namespace qscreen {

// Binary tensor container, little-endian throughout.
//
// Clip file ("QVC1"):
//   magic[4] | dtype u8 | rank u8 (3 or 4) | dims u32 x rank | payload
// dtype 0 = uint8, 1 = float32. Rank 3 is [T,H,W], rank 4 is [T,C,H,W].
// float32 payloads hold values in [0,1]; uint8 payloads are raw 0..255.
//
// Weight file ("QWT1"): same per-tensor encoding plus a record count and a
// name per record, dtype 1 = float32 or 2 = float64, rank 1..8:
//   magic[4] | count u32 | { name_len u16 | name | dtype u8 | rank u8 |
//                            dims u32 x rank | payload } x count

enum class ClipDtype : uint8_t { u8 = 0, f32 = 1, f64 = 2 };

// Always returns float32 data; uint8 payloads are scaled by 1/255.
Tensor<float> read_clip(const std::filesystem::path& path);

// Writes dtype 1 (float32), rank = clip rank.
void write_clip(const std::filesystem::path& path, const Tensor<float>& clip);

template <class T>
void write_weights(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, Tensor<T>>>& params);

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> read_weights(const std::filesystem::path& path);

extern template void write_weights<float>(
    const std::filesystem::path&, const std::vector<std::pair<std::string, Tensor<float>>>&);
extern template void write_weights<double>(
    const std::filesystem::path&, const std::vector<std::pair<std::string, Tensor<double>>>&);
extern template std::vector<std::pair<std::string, Tensor<float>>> read_weights<float>(
    const std::filesystem::path&);
extern template std::vector<std::pair<std::string, Tensor<double>>> read_weights<double>(
    const std::filesystem::path&);

}  // namespace qscreen
