#pragma once

#include "pipo/imaging.hpp"
#include "pipo/unfolding.hpp"

#include <filesystem>
#include <string>
#include <vector>

// Measurement archive. Byte layout is documented in docs/measurement_archive.md.

namespace pipo::archive {

inline constexpr std::uint32_t kArchiveVersion = 1;

/// Measurements of one image: for patch p, row p of `records` holds the m
/// entries of y followed by the mean channel (the sum of the patch pixels).
struct MeasurementRecord {
  std::string name;
  imaging::GridShape grid;
  bool mean_subtracted = true;
  RowMatrix records;  // count x (m + 1)

  Index m() const { return records.cols() - 1; }
};

/// Samples one image with the pipeline's operator. The mean channel is the
/// patch pixel sum whether or not the measurements are mean-subtracted.
MeasurementRecord record_image(const unfolding::Pipeline& pipeline, const imaging::Image& image);

/// Measurements in the form the reconstruction stage consumes. Patch means are recovered as mean_channel / n when
/// the record is mean-subtracted and set to zero otherwise.
unfolding::SampledImage to_sampled(const MeasurementRecord& record);

std::string serialize(const std::vector<MeasurementRecord>& records);
std::vector<MeasurementRecord> deserialize(const std::string& bytes);

void save(const std::filesystem::path& path, const std::vector<MeasurementRecord>& records);
std::vector<MeasurementRecord> load(const std::filesystem::path& path);

}  // namespace pipo::archive
