#include "feature_store.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "rng.hpp"

namespace ocl {

namespace {

void store_le32(uint32_t v, char* out) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

void store_le64(uint64_t v, char* out) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

uint32_t load_le32(const char* in) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

uint64_t load_le64(const char* in) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

void encode_header(const FeatureFileHeader& h, char out[kFeatureHeaderBytes]) {
  std::memcpy(out, kFeatureMagic, 4);
  store_le32(h.version, out + 4);
  store_le64(h.n_samples, out + 8);
  store_le32(h.dim, out + 16);
  out[20] = static_cast<char>(h.dtype_code);
  std::memset(out + 21, 0, 7);
}

FeatureFileHeader decode_header(const char in[kFeatureHeaderBytes], const std::string& path) {
  if (std::memcmp(in, kFeatureMagic, 4) != 0)
    throw Error(ErrorCode::format, "bad magic in feature file: " + path);
  FeatureFileHeader h;
  h.version = load_le32(in + 4);
  if (h.version != kFeatureVersion)
    throw Error(ErrorCode::format,
                "unsupported feature file version " + std::to_string(h.version) + ": " + path);
  h.n_samples = load_le64(in + 8);
  h.dim = load_le32(in + 16);
  h.dtype_code = static_cast<uint8_t>(in[20]);
  if (h.dtype_code != kDtypeF32 && h.dtype_code != kDtypeF64)
    throw Error(ErrorCode::format,
                "unsupported dtype code " + std::to_string(h.dtype_code) + ": " + path);
  if (h.dim < 1) throw Error(ErrorCode::format, "feature file dim must be >= 1: " + path);
  return h;
}

uint64_t payload_bytes(const FeatureFileHeader& h) {
  const uint64_t value_bytes = h.dtype_code == kDtypeF32 ? 4 : 8;
  return h.n_samples * h.dim * value_bytes;
}

std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open file: " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<char> buf(static_cast<size_t>(size));
  if (size > 0) in.read(buf.data(), size);
  if (!in) throw Error(ErrorCode::io, "failed to read file: " + path);
  return buf;
}

uint32_t float_bits(float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  return bits;
}

float float_from_bits(uint32_t bits) {
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

uint64_t double_bits(double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  return bits;
}

double double_from_bits(uint64_t bits) {
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

void write_container(const std::string& path, const FeatureFileHeader& header,
                     const std::vector<float>* data32, const std::vector<double>* data64) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open file for writing: " + path);
  char head[kFeatureHeaderBytes];
  encode_header(header, head);
  out.write(head, kFeatureHeaderBytes);
  if (data32) {
    std::vector<char> buf(data32->size() * 4);
    for (size_t i = 0; i < data32->size(); ++i) store_le32(float_bits((*data32)[i]), buf.data() + 4 * i);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  } else if (data64) {
    std::vector<char> buf(data64->size() * 8);
    for (size_t i = 0; i < data64->size(); ++i) store_le64(double_bits((*data64)[i]), buf.data() + 8 * i);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  out.flush();
  if (!out) throw Error(ErrorCode::io, "failed to write file: " + path);
}

}  // namespace

const char* split_name(Split split) { return split == Split::train ? "train" : "test"; }

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "test") return Split::test;
  throw Error(ErrorCode::format, "unknown split name: " + name);
}

void Manifest::add(const ManifestRow& row) {
  if (by_sample_id_.count(row.sample_id))
    throw Error(ErrorCode::invalid_argument,
                "duplicate sample_id in manifest: " + std::to_string(row.sample_id));
  by_sample_id_.emplace(row.sample_id, rows_.size());
  rows_.push_back(row);
}

uint32_t Manifest::num_classes() const {
  uint32_t max_id = 0;
  bool any = false;
  for (const auto& row : rows_) {
    max_id = std::max(max_id, row.class_id);
    any = true;
  }
  return any ? max_id + 1 : 0;
}

std::vector<ManifestRow> Manifest::split_rows(Split split) const {
  std::vector<ManifestRow> out;
  for (const auto& row : rows_)
    if (row.split == split) out.push_back(row);
  return out;
}

const ManifestRow& Manifest::row_for_sample(uint64_t sample_id) const {
  auto it = by_sample_id_.find(sample_id);
  if (it == by_sample_id_.end())
    throw Error(ErrorCode::out_of_range, "unknown sample_id: " + std::to_string(sample_id));
  return rows_[it->second];
}

void Manifest::save(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open manifest for writing: " + path);
  out << "sample_id,split,class_id,group_id,row_index\n";
  for (const auto& row : rows_) {
    out << row.sample_id << ',' << split_name(row.split) << ',' << row.class_id << ',';
    if (row.group_id != kNoGroup) out << row.group_id;
    out << ',' << row.row_index << '\n';
  }
  out.flush();
  if (!out) throw Error(ErrorCode::io, "failed to write manifest: " + path);
}

Manifest Manifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open manifest: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::format, "empty manifest: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "sample_id,split,class_id,group_id,row_index")
    throw Error(ErrorCode::format, "bad manifest header: " + path);
  Manifest manifest;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    if (fields.size() != 5)
      throw Error(ErrorCode::format,
                  "manifest line " + std::to_string(line_no) + " has " +
                      std::to_string(fields.size()) + " fields, expected 5: " + path);
    try {
      ManifestRow row;
      row.sample_id = std::stoull(fields[0]);
      row.split = split_from_name(fields[1]);
      row.class_id = static_cast<uint32_t>(std::stoul(fields[2]));
      row.group_id = fields[3].empty() ? kNoGroup : std::stoull(fields[3]);
      row.row_index = std::stoull(fields[4]);
      manifest.add(row);
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::format,
                  "bad manifest line " + std::to_string(line_no) + " (" + e.what() + "): " + path);
    }
  }
  return manifest;
}

FeatureFile::FeatureFile(uint32_t dim, std::vector<float> data) {
  if (dim < 1) throw Error(ErrorCode::invalid_argument, "feature dim must be >= 1");
  if (data.size() % dim != 0)
    throw Error(ErrorCode::invalid_argument, "feature data size not a multiple of dim");
  header_.dim = dim;
  header_.n_samples = data.size() / dim;
  header_.dtype_code = kDtypeF32;
  data32_ = std::move(data);
}

FeatureFile FeatureFile::open(const std::string& path) {
  const std::vector<char> buf = read_all(path);
  if (buf.size() < kFeatureHeaderBytes)
    throw Error(ErrorCode::format, "truncated feature file (short header): " + path);
  FeatureFile file;
  file.header_ = decode_header(buf.data(), path);
  const uint64_t expected = kFeatureHeaderBytes + payload_bytes(file.header_);
  if (buf.size() != expected)
    throw Error(ErrorCode::format, "truncated feature file: expected " + std::to_string(expected) +
                                       " bytes, got " + std::to_string(buf.size()) + ": " + path);
  const char* payload = buf.data() + kFeatureHeaderBytes;
  const uint64_t values = file.header_.n_samples * file.header_.dim;
  if (file.header_.dtype_code == kDtypeF32) {
    file.data32_.resize(values);
    for (uint64_t i = 0; i < values; ++i)
      file.data32_[i] = float_from_bits(load_le32(payload + 4 * i));
  } else {
    file.data64_.resize(values);
    for (uint64_t i = 0; i < values; ++i)
      file.data64_[i] = double_from_bits(load_le64(payload + 8 * i));
  }
  return file;
}

Eigen::VectorXd FeatureFile::row(uint64_t index) const {
  Eigen::VectorXd out(header_.dim);
  copy_row(index, out.data());
  return out;
}

void FeatureFile::copy_row(uint64_t index, double* out) const {
  if (index >= header_.n_samples)
    throw Error(ErrorCode::out_of_range, "row index " + std::to_string(index) +
                                             " out of range (n_samples=" +
                                             std::to_string(header_.n_samples) + ")");
  const uint64_t offset = index * header_.dim;
  if (header_.dtype_code == kDtypeF32) {
    for (uint32_t j = 0; j < header_.dim; ++j) out[j] = static_cast<double>(data32_[offset + j]);
  } else {
    for (uint32_t j = 0; j < header_.dim; ++j) out[j] = data64_[offset + j];
  }
}

WriteResult write_feature_file(const std::vector<SampleRecord>& samples, uint32_t dim,
                               const std::string& feature_path) {
  if (dim < 1) throw Error(ErrorCode::invalid_argument, "feature dim must be >= 1");
  std::vector<float> data;
  data.reserve(samples.size() * dim);
  WriteResult result;
  uint64_t row_index = 0;
  for (const auto& sample : samples) {
    if (sample.features.size() != static_cast<Eigen::Index>(dim))
      throw Error(ErrorCode::invalid_argument,
                  "sample dimension mismatch: expected " + std::to_string(dim) + ", got " +
                      std::to_string(sample.features.size()));
    for (uint32_t j = 0; j < dim; ++j) data.push_back(static_cast<float>(sample.features[j]));
    ManifestRow row;
    row.sample_id = row_index;
    row.split = sample.split;
    row.class_id = sample.class_id;
    row.group_id = sample.group_id;
    row.row_index = row_index;
    result.manifest.add(row);
    ++row_index;
  }
  result.header.n_samples = samples.size();
  result.header.dim = dim;
  result.header.dtype_code = kDtypeF32;
  write_container(feature_path, result.header, &data, nullptr);
  return result;
}

void write_matrix(const std::string& path, const Eigen::MatrixXd& m) {
  FeatureFileHeader header;
  header.n_samples = static_cast<uint64_t>(m.rows());
  header.dim = static_cast<uint32_t>(m.cols());
  header.dtype_code = kDtypeF64;
  if (header.dim < 1) throw Error(ErrorCode::invalid_argument, "matrix must have >= 1 column");
  std::vector<double> data(static_cast<size_t>(m.rows()) * static_cast<size_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      data[static_cast<size_t>(r) * m.cols() + c] = m(r, c);
  write_container(path, header, nullptr, &data);
}

Eigen::MatrixXd read_matrix(const std::string& path) {
  const FeatureFile file = FeatureFile::open(path);
  Eigen::MatrixXd m(file.num_rows(), file.dim());
  Eigen::VectorXd row(file.dim());
  for (uint64_t r = 0; r < file.num_rows(); ++r) {
    file.copy_row(r, row.data());
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

Dataset::Dataset(FeatureFile features, Manifest manifest)
    : features_(std::move(features)), manifest_(std::move(manifest)) {
  for (const auto& row : manifest_.rows()) {
    if (row.row_index >= features_.num_rows())
      throw Error(ErrorCode::format, "manifest row_index " + std::to_string(row.row_index) +
                                         " out of range for feature file with " +
                                         std::to_string(features_.num_rows()) + " rows");
  }
}

Dataset Dataset::open(const std::string& feature_path, const std::string& manifest_path) {
  return Dataset(FeatureFile::open(feature_path), Manifest::load(manifest_path));
}

Eigen::VectorXd Dataset::sample_features(uint64_t sample_id) const {
  return features_.row(manifest_.row_for_sample(sample_id).row_index);
}

const ManifestRow& Dataset::sample_row(uint64_t sample_id) const {
  return manifest_.row_for_sample(sample_id);
}

WriteResult ingest_csv(const std::string& csv_path, const std::string& feature_path,
                       const std::string& manifest_path) {
  std::ifstream in(csv_path);
  if (!in) throw Error(ErrorCode::io, "cannot open csv: " + csv_path);
  std::vector<SampleRecord> samples;
  uint32_t dim = 0;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    if (fields.size() < 4) {
      throw Error(ErrorCode::format, "csv line " + std::to_string(line_no) +
                                         " needs split,class_id,group_id and at least one value: " +
                                         csv_path);
    }
    try {
      SampleRecord sample;
      sample.split = split_from_name(fields[0]);
      sample.class_id = static_cast<uint32_t>(std::stoul(fields[1]));
      sample.group_id = fields[2].empty() ? kNoGroup : std::stoull(fields[2]);
      const size_t values = fields.size() - 3;
      if (dim == 0) {
        dim = static_cast<uint32_t>(values);
      } else if (values != dim) {
        throw Error(ErrorCode::format, "csv line " + std::to_string(line_no) + " has " +
                                           std::to_string(values) + " values, expected " +
                                           std::to_string(dim) + ": " + csv_path);
      }
      sample.features.resize(dim);
      for (uint32_t j = 0; j < dim; ++j) sample.features[j] = std::stod(fields[3 + j]);
      samples.push_back(std::move(sample));
    } catch (const Error&) {
      throw;
    } catch (const std::exception& e) {
      throw Error(ErrorCode::format,
                  "bad csv line " + std::to_string(line_no) + " (" + e.what() + "): " + csv_path);
    }
  }
  if (samples.empty()) throw Error(ErrorCode::format, "csv holds no samples: " + csv_path);
  WriteResult result = write_feature_file(samples, dim, feature_path);
  result.manifest.save(manifest_path);
  return result;
}

std::vector<SampleRecord> synthesize_gaussian_samples(const SynthParams& params) {
  if (params.num_classes < 2)
    throw Error(ErrorCode::invalid_argument, "synthesis requires num_classes >= 2");
  if (params.dim < 2) throw Error(ErrorCode::invalid_argument, "synthesis requires dim >= 2");
  if (params.train_per_class == 0 || params.test_per_class == 0)
    throw Error(ErrorCode::invalid_argument, "synthesis requires positive per-class counts");
  if (params.group_size == 0)
    throw Error(ErrorCode::invalid_argument, "synthesis requires group_size >= 1");
  if (params.noise_sigma < 0.0)
    throw Error(ErrorCode::invalid_argument, "noise_sigma must be non-negative");

  Rng rng(params.seed);

  // Class means first, then train samples class by class, then test samples
  // class by class; this fixes the RNG consumption order.
  std::vector<Eigen::VectorXd> means(params.num_classes);
  for (uint32_t k = 0; k < params.num_classes; ++k) {
    Eigen::VectorXd direction(params.dim);
    for (uint32_t j = 0; j < params.dim; ++j) direction[j] = rng.next_gaussian();
    const double norm = direction.norm();
    means[k] = norm > 0.0 ? Eigen::VectorXd(direction * (params.class_mean_scale / norm))
                          : Eigen::VectorXd::Zero(params.dim);
  }

  std::vector<SampleRecord> samples;
  samples.reserve(static_cast<size_t>(params.num_classes) *
                  (params.train_per_class + params.test_per_class));
  uint64_t next_group = 0;
  auto emit = [&](uint32_t k, uint32_t count, Split split) {
    uint64_t group = 0;
    for (uint32_t i = 0; i < count; ++i) {
      if (i % params.group_size == 0) group = next_group++;
      SampleRecord rec;
      rec.features = means[k];
      for (uint32_t j = 0; j < params.dim; ++j)
        rec.features[j] += params.noise_sigma * rng.next_gaussian();
      rec.class_id = k;
      rec.split = split;
      rec.group_id = group;
      samples.push_back(std::move(rec));
    }
  };
  for (uint32_t k = 0; k < params.num_classes; ++k) emit(k, params.train_per_class, Split::train);
  for (uint32_t k = 0; k < params.num_classes; ++k) emit(k, params.test_per_class, Split::test);
  return samples;
}

Dataset synthesize_gaussian_dataset(const SynthParams& params) {
  const std::vector<SampleRecord> samples = synthesize_gaussian_samples(params);
  std::vector<float> data;
  data.reserve(samples.size() * params.dim);
  Manifest manifest;
  uint64_t row_index = 0;
  for (const auto& sample : samples) {
    for (uint32_t j = 0; j < params.dim; ++j) data.push_back(static_cast<float>(sample.features[j]));
    ManifestRow row;
    row.sample_id = row_index;
    row.split = sample.split;
    row.class_id = sample.class_id;
    row.group_id = sample.group_id;
    row.row_index = row_index;
    manifest.add(row);
    ++row_index;
  }
  return Dataset(FeatureFile(params.dim, std::move(data)), std::move(manifest));
}

WriteResult synthesize_to_files(const SynthParams& params, const std::string& feature_path,
                                const std::string& manifest_path) {
  const std::vector<SampleRecord> samples = synthesize_gaussian_samples(params);
  WriteResult result = write_feature_file(samples, params.dim, feature_path);
  result.manifest.save(manifest_path);
  return result;
}

}  // namespace ocl
