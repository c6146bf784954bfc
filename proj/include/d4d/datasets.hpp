#pragma once

#include <string>

#include <json.hpp>

#include "d4d/rng.hpp"
#include "d4d/train.hpp"

namespace d4d {

// A generated classification task with one-hot labels and a held-out test
// split. Fully determined by its descriptor and the derivation seed.
struct TaskData {
  Dataset train;
  Dataset test;
  std::size_t classes = 0;
  std::string name;
};

struct DatasetDesc {
  std::string task;     // "blobs", "moons", "digits8x8"
  int train_n = 200;
  int test_n = 100;
  int classes = 3;      // blobs only; moons fixes 2, digits fixes 10
  double noise = 0.5;
  std::uint64_t seed = 1;

  bool operator==(const DatasetDesc&) const = default;
};

nlohmann::json dataset_desc_to_json(const DatasetDesc& d);
DatasetDesc dataset_desc_from_json(const nlohmann::json& j);

// Gaussian class clusters on a circle in the plane.
TaskData make_blobs(int train_n, int test_n, int classes, double noise, Rng rng);
// Two interleaving half-moons.
TaskData make_moons(int train_n, int test_n, double noise, Rng rng);
// Ten 8x8 glyph templates with pixel noise and +-1 px shifts, values in [0,1].
TaskData make_digits(int train_n, int test_n, double noise, Rng rng);

TaskData make_task(const DatasetDesc& desc);

}  // namespace d4d
