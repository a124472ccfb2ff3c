#pragma once

#include "spkdnn/core.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace spkdnn {

/// One utterance embedding (an i-vector in the original setting).
struct Embedding {
  std::string utterance_id;
  std::optional<std::string> speaker_id;  // nullopt is written as "-"
  Eigen::VectorXd values;
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(Index dimension) : dimension_(dimension) {}

  /// Throws InvalidArgument on dimension mismatch or duplicate utterance id.
  void add(Embedding e);

  Index dimension() const { return dimension_; }
  std::size_t size() const { return embeddings_.size(); }
  bool empty() const { return embeddings_.empty(); }

  const std::vector<Embedding>& embeddings() const { return embeddings_; }
  const Embedding& operator[](std::size_t i) const { return embeddings_[i]; }

  /// All values stacked as rows (size() x dimension()).
  Eigen::MatrixXd matrix() const;

  /// Rows belonging to one speaker, in file order.
  Eigen::MatrixXd speaker_matrix(const std::string& speaker_id) const;

  /// Distinct speaker ids in first-appearance order (unlabeled rows skipped).
  std::vector<std::string> speakers() const;

  std::optional<std::size_t> find(const std::string& utterance_id) const;

  friend bool operator==(const Dataset& a, const Dataset& b);

 private:
  Index dimension_ = 0;
  std::vector<Embedding> embeddings_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct SynthConfig {
  int num_speakers = 20;
  int sessions_per_speaker = 3;
  int dimension = 400;
  double between_speaker_spread = 1.0;
  double within_speaker_spread = 0.2;
  std::uint64_t seed = 0;
  // Prefix for generated ids: "<prefix>spk0003" / "<prefix>spk0003_s01".
  std::string id_prefix;
};

struct Whitener {
  Eigen::VectorXd mean;
  Eigen::MatrixXd transform;

  Index dimension() const { return mean.size(); }
};

Dataset load_embeddings(const std::filesystem::path& path);
void save_embeddings(const Dataset& dataset, const std::filesystem::path& path);

/// Isotropic Gaussian speaker means with Gaussian session offsets around them.
Dataset generate_synthetic(const SynthConfig& config);

Eigen::VectorXd length_normalize(const Eigen::Ref<const Eigen::VectorXd>& v);

/// Rows of `vectors` averaged componentwise.
Eigen::VectorXd average_embeddings(const Eigen::Ref<const Eigen::MatrixXd>& vectors);

Whitener fit_whitener(const Eigen::Ref<const Eigen::MatrixXd>& background);
inline Whitener fit_whitener(const Dataset& background) { return fit_whitener(background.matrix()); }

Eigen::VectorXd apply_whitener(const Whitener& w, const Eigen::Ref<const Eigen::VectorXd>& v);

void save_whitener(const Whitener& w, const std::filesystem::path& path);
Whitener load_whitener(const std::filesystem::path& path);

}  // namespace spkdnn
