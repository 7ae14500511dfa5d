#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "error.hpp"

namespace ocl {

// Binary feature container layout (header is exactly 28 bytes):
//   [magic "OCLF"][version u32 LE][n_samples u64 LE][dim u32 LE]
//   [dtype u8][7 reserved zero bytes][row-major sample data]
// dtype 0 stores rows as 32-bit IEEE-754 little-endian floats and is the
// interchange format for datasets. dtype 1 stores 64-bit doubles and is used
// for accumulator/learner state checkpoints.

inline constexpr char kFeatureMagic[4] = {'O', 'C', 'L', 'F'};
inline constexpr uint32_t kFeatureVersion = 1;
inline constexpr uint64_t kFeatureHeaderBytes = 28;
inline constexpr uint8_t kDtypeF32 = 0;
inline constexpr uint8_t kDtypeF64 = 1;

struct FeatureFileHeader {
  uint32_t version = kFeatureVersion;
  uint64_t n_samples = 0;
  uint32_t dim = 0;
  uint8_t dtype_code = kDtypeF32;
};

enum class Split : uint8_t { train = 0, test = 1 };

const char* split_name(Split split);
Split split_from_name(const std::string& name);

// group_id for samples without instance/video grouping.
inline constexpr uint64_t kNoGroup = UINT64_MAX;

struct ManifestRow {
  uint64_t sample_id = 0;
  Split split = Split::train;
  uint32_t class_id = 0;
  uint64_t group_id = kNoGroup;
  uint64_t row_index = 0;
};

// Per-sample metadata, stored as UTF-8 CSV with the fixed header row
// "sample_id,split,class_id,group_id,row_index". An empty group_id field
// round-trips as kNoGroup.
class Manifest {
 public:
  void add(const ManifestRow& row);

  const std::vector<ManifestRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }

  // Label space is the dense range [0, K); K = max class_id + 1.
  uint32_t num_classes() const;

  std::vector<ManifestRow> split_rows(Split split) const;
  const ManifestRow& row_for_sample(uint64_t sample_id) const;

  void save(const std::string& path) const;
  static Manifest load(const std::string& path);

 private:
  std::vector<ManifestRow> rows_;
  std::unordered_map<uint64_t, size_t> by_sample_id_;
};

// Frozen feature extractor stand-in: only its output dimension and stored
// parameter count matter to the engine.
struct BackboneConstant {
  std::string name;
  uint32_t feature_dim = 0;
  uint64_t param_count = 0;
};

struct SampleRecord {
  Eigen::VectorXd features;
  uint32_t class_id = 0;
  Split split = Split::train;
  uint64_t group_id = kNoGroup;
};

// Immutable after open; safe for concurrent readers.
class FeatureFile {
 public:
  FeatureFile() = default;
  FeatureFile(uint32_t dim, std::vector<float> data);

  static FeatureFile open(const std::string& path);

  const FeatureFileHeader& header() const { return header_; }
  uint64_t num_rows() const { return header_.n_samples; }
  uint32_t dim() const { return header_.dim; }

  // Stored values widened to double, no further rounding.
  Eigen::VectorXd row(uint64_t index) const;
  void copy_row(uint64_t index, double* out) const;

 private:
  FeatureFileHeader header_;
  std::vector<float> data32_;
  std::vector<double> data64_;
};

struct WriteResult {
  FeatureFileHeader header;
  Manifest manifest;
};

// Writes a dtype-0 feature file; manifest rows are emitted in insertion order
// with sample_id == row_index. `dim` governs the empty-input case and must
// match every sample.
WriteResult write_feature_file(const std::vector<SampleRecord>& samples, uint32_t dim,
                               const std::string& feature_path);

// dtype-1 matrix container used for state checkpoints.
void write_matrix(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::string& path);

// A feature file paired with its manifest. Open validates that every
// row_index is in range and that the pair is dimensionally consistent.
class Dataset {
 public:
  Dataset(FeatureFile features, Manifest manifest);

  static Dataset open(const std::string& feature_path, const std::string& manifest_path);

  const FeatureFile& features() const { return features_; }
  const Manifest& manifest() const { return manifest_; }
  uint32_t dim() const { return features_.dim(); }
  uint32_t num_classes() const { return manifest_.num_classes(); }

  Eigen::VectorXd row(uint64_t row_index) const { return features_.row(row_index); }
  Eigen::VectorXd sample_features(uint64_t sample_id) const;
  const ManifestRow& sample_row(uint64_t sample_id) const;

 private:
  FeatureFile features_;
  Manifest manifest_;
};

struct SynthParams {
  uint32_t num_classes = 2;
  uint32_t dim = 2;
  uint32_t train_per_class = 1;
  uint32_t test_per_class = 1;
  double class_mean_scale = 10.0;
  double noise_sigma = 1.0;
  uint32_t group_size = 10;  // consecutive samples per pseudo-video
  uint64_t seed = 0;
};

// Converts a headerless CSV (split,class_id,group_id,v0,...,v_{d-1} per row;
// empty group_id for ungrouped samples) into a dtype-0 feature file plus
// manifest. The dimension is inferred from the first row.
WriteResult ingest_csv(const std::string& csv_path, const std::string& feature_path,
                       const std::string& manifest_path);

// Isotropic Gaussian class blobs with seeded means of norm class_mean_scale.
// Pure function of its params; train samples of each class are grouped into
// pseudo-videos of group_size consecutive samples.
std::vector<SampleRecord> synthesize_gaussian_samples(const SynthParams& params);
Dataset synthesize_gaussian_dataset(const SynthParams& params);
WriteResult synthesize_to_files(const SynthParams& params, const std::string& feature_path,
                                const std::string& manifest_path);

}  // namespace ocl
