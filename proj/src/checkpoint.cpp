#include "d4d/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "d4d/error.hpp"

using nlohmann::json;

namespace d4d {

void save_checkpoint(const std::string& path, const FaultClassifier& clf, const Vocab& vocab,
                     int T, int l_max, int S) {
  const auto blocks = clf.network().all_param_blocks();
  std::size_t count = 0;
  for (const ParamBlock* b : blocks) count += b->value.numel();

  json header;
  header["version"] = 1;
  header["classifier"] = classifier_spec_to_json(clf.spec());
  header["build_seed"] = clf.build_seed();
  header["vocab"] = json::parse(vocab.to_json());
  header["vocab_hash"] = vocab.hash();
  header["T"] = T;
  header["L_max"] = l_max;
  header["S"] = S;
  header["param_count"] = count;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("save_checkpoint: cannot open " + path);
  out << kCheckpointMagic << '\n';
  const std::uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const ParamBlock* b : blocks) {
    out.write(reinterpret_cast<const char*>(b->value.data.data()),
              static_cast<std::streamsize>(b->value.numel() * sizeof(double)));
  }
  if (!out) throw Error("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("load_checkpoint: cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic)
    throw Error("load_checkpoint: " + path + " is not a version-" +
                std::string(kCheckpointMagic).substr(7) + " checkpoint (magic '" + magic + "')");
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string htext(hlen, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw Error("load_checkpoint: truncated header in " + path);
  json header = json::parse(htext);
  if (header.at("version").get<int>() != 1)
    throw Error("load_checkpoint: unsupported checkpoint version " +
                std::to_string(header.at("version").get<int>()));

  LoadedCheckpoint lc;
  lc.meta.spec = classifier_spec_from_json(header.at("classifier"));
  lc.meta.build_seed = header.at("build_seed").get<std::uint64_t>();
  lc.meta.vocab = Vocab::from_json(header.at("vocab").dump());
  lc.meta.T = header.at("T").get<int>();
  lc.meta.l_max = header.at("L_max").get<int>();
  lc.meta.S = header.at("S").get<int>();
  if (header.at("vocab_hash").get<std::uint64_t>() != lc.meta.vocab.hash())
    throw Error("load_checkpoint: vocab hash mismatch in " + path);

  lc.classifier = std::make_unique<FaultClassifier>(lc.meta.spec, lc.meta.build_seed);
  auto blocks = lc.classifier->network().all_param_blocks();
  std::size_t count = 0;
  for (ParamBlock* b : blocks) count += b->value.numel();
  if (count != header.at("param_count").get<std::size_t>())
    throw Error("load_checkpoint: parameter count mismatch in " + path);
  for (ParamBlock* b : blocks) {
    in.read(reinterpret_cast<char*>(b->value.data.data()),
            static_cast<std::streamsize>(b->value.numel() * sizeof(double)));
  }
  if (!in) throw Error("load_checkpoint: truncated parameter block in " + path);
  // the classifier's BatchNorm always runs on its stored statistics
  lc.classifier->network().layer(0).set_stats_frozen(true);
  return lc;
}

}  // namespace d4d
