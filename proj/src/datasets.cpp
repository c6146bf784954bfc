#include "d4d/datasets.hpp"

#include <cmath>
#include <numbers>

#include "d4d/error.hpp"

using nlohmann::json;

namespace d4d {

json dataset_desc_to_json(const DatasetDesc& d) {
  json j;
  j["task"] = d.task;
  j["train_n"] = d.train_n;
  j["test_n"] = d.test_n;
  j["classes"] = d.classes;
  j["noise"] = d.noise;
  j["seed"] = d.seed;
  return j;
}

DatasetDesc dataset_desc_from_json(const json& j) {
  DatasetDesc d;
  d.task = j.at("task").get<std::string>();
  if (j.contains("train_n")) d.train_n = j.at("train_n").get<int>();
  if (j.contains("test_n")) d.test_n = j.at("test_n").get<int>();
  if (j.contains("classes")) d.classes = j.at("classes").get<int>();
  if (j.contains("noise")) d.noise = j.at("noise").get<double>();
  if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
  return d;
}

namespace {

Dataset to_dataset(const std::vector<std::vector<double>>& xs, const std::vector<int>& ys,
                   std::size_t classes) {
  const std::size_t n = xs.size();
  const std::size_t f = xs[0].size();
  Tensor x = Tensor::zeros({n, f});
  Tensor y = Tensor::zeros({n, classes});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) x[i * f + j] = xs[i][j];
    y[i * classes + static_cast<std::size_t>(ys[i])] = 1.0;
  }
  Dataset d;
  d.inputs.push_back(std::move(x));
  d.targets = std::move(y);
  return d;
}

// Round-robin class assignment keeps both splits balanced.
TaskData split_task(std::vector<std::vector<double>> xs, std::vector<int> ys, int train_n,
                    int test_n, std::size_t classes, std::string name, Rng rng) {
  const std::size_t n = xs.size();
  const auto perm = shuffled_indices(n, rng.child("task_shuffle").stream());
  std::vector<std::vector<double>> tr_x, te_x;
  std::vector<int> tr_y, te_y;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t i = perm[k];
    if (k < static_cast<std::size_t>(train_n)) {
      tr_x.push_back(std::move(xs[i]));
      tr_y.push_back(ys[i]);
    } else {
      te_x.push_back(std::move(xs[i]));
      te_y.push_back(ys[i]);
    }
  }
  (void)test_n;
  TaskData t;
  t.train = to_dataset(tr_x, tr_y, classes);
  t.test = to_dataset(te_x, te_y, classes);
  t.classes = classes;
  t.name = std::move(name);
  return t;
}

}  // namespace

TaskData make_blobs(int train_n, int test_n, int classes, double noise, Rng rng) {
  if (classes < 2) throw Error("make_blobs: needs >= 2 classes");
  const int n = train_n + test_n;
  RngStream s = rng.child("blobs").stream();
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (int i = 0; i < n; ++i) {
    const int c = i % classes;
    const double angle = 2.0 * std::numbers::pi * c / classes;
    const double cx = 3.0 * std::cos(angle);
    const double cy = 3.0 * std::sin(angle);
    xs.push_back({cx + s.normal(0.0, noise), cy + s.normal(0.0, noise)});
    ys.push_back(c);
  }
  return split_task(std::move(xs), std::move(ys), train_n, test_n,
                    static_cast<std::size_t>(classes), "blobs", rng);
}

TaskData make_moons(int train_n, int test_n, double noise, Rng rng) {
  const int n = train_n + test_n;
  RngStream s = rng.child("moons").stream();
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (int i = 0; i < n; ++i) {
    const int c = i % 2;
    const double t = s.uniform() * std::numbers::pi;
    double px, py;
    if (c == 0) {
      px = std::cos(t);
      py = std::sin(t);
    } else {
      px = 1.0 - std::cos(t);
      py = 0.5 - std::sin(t);
    }
    xs.push_back({px + s.normal(0.0, noise), py + s.normal(0.0, noise)});
    ys.push_back(c);
  }
  return split_task(std::move(xs), std::move(ys), train_n, test_n, 2, "moons", rng);
}

namespace {

// 8x8 glyphs for the ten digits; '#' marks lit pixels.
const char* const kGlyphs[10][8] = {
    {"..####..", ".##..##.", "##....##", "##....##", "##....##", "##....##", ".##..##.", "..####.."},
    {"...##...", "..###...", ".####...", "...##...", "...##...", "...##...", "...##...", ".######."},
    {".#####..", "##...##.", ".....##.", "....##..", "...##...", "..##....", ".##.....", "#######."},
    {".#####..", "##...##.", ".....##.", "..####..", ".....##.", ".....##.", "##...##.", ".#####.."},
    {"....##..", "...###..", "..####..", ".##.##..", "##..##..", "#######.", "....##..", "....##.."},
    {"#######.", "##......", "##......", "######..", ".....##.", ".....##.", "##...##.", ".#####.."},
    {"..####..", ".##.....", "##......", "######..", "##...##.", "##...##.", "##...##.", ".#####.."},
    {"#######.", ".....##.", "....##..", "...##...", "..##....", "..##....", "..##....", "..##...."},
    {".#####..", "##...##.", "##...##.", ".#####..", "##...##.", "##...##.", "##...##.", ".#####.."},
    {".#####..", "##...##.", "##...##.", ".######.", ".....##.", "....##..", "...##...", ".###...."},
};

}  // namespace

TaskData make_digits(int train_n, int test_n, double noise, Rng rng) {
  const int n = train_n + test_n;
  RngStream s = rng.child("digits").stream();
  std::vector<std::vector<double>> xs;
  std::vector<int> ys;
  for (int i = 0; i < n; ++i) {
    const int c = i % 10;
    const int dy = static_cast<int>(s.below(3)) - 1;
    const int dx = static_cast<int>(s.below(3)) - 1;
    std::vector<double> img(64, 0.0);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const int sy = y - dy, sx = x - dx;
        double v = 0.0;
        if (sy >= 0 && sy < 8 && sx >= 0 && sx < 8) {
          v = kGlyphs[c][sy][sx] == '#' ? 0.9 : 0.1;
        }
        v += s.normal(0.0, noise);
        if (v < 0.0) v = 0.0;
        if (v > 1.0) v = 1.0;
        img[y * 8 + x] = v;
      }
    }
    xs.push_back(std::move(img));
    ys.push_back(c);
  }
  TaskData t = split_task(std::move(xs), std::move(ys), train_n, test_n, 10, "digits8x8", rng);
  // image layout for conv nets
  for (Dataset* d : {&t.train, &t.test}) {
    Tensor& x = d->inputs[0];
    x.shape = {x.shape[0], 8, 8, 1};
  }
  return t;
}

TaskData make_task(const DatasetDesc& desc) {
  Rng rng = Rng(desc.seed).child("dataset").child(desc.task);
  if (desc.task == "blobs") return make_blobs(desc.train_n, desc.test_n, desc.classes, desc.noise, rng);
  if (desc.task == "moons") return make_moons(desc.train_n, desc.test_n, desc.noise, rng);
  if (desc.task == "digits8x8") return make_digits(desc.train_n, desc.test_n, desc.noise, rng);
  throw Error("unknown task: " + desc.task);
}

}  // namespace d4d
