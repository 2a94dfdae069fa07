#include "zo/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace zo {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& item : obj.items()) {
    if (allowed.count(item.key()) == 0) {
      throw ConfigError("unknown field '" + item.key() + "' in " + where);
    }
  }
}

const json& require_object(const json& value, const std::string& where) {
  if (!value.is_object()) throw ConfigError(where + " must be an object");
  return value;
}

template <typename T>
T get(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + key + "' in " + where + " has the wrong type");
  }
}

std::size_t get_count(const json& obj, const std::string& key, const std::string& where) {
  const json& value = obj.at(key);
  if (!value.is_number_integer() || value.get<long long>() < 0) {
    throw ConfigError("field '" + key + "' in " + where + " must be a non-negative integer");
  }
  return value.get<std::size_t>();
}

std::uint64_t get_seed(const json& obj, const std::string& key, const std::string& where) {
  const json& value = obj.at(key);
  if (!value.is_number_integer() || (value.is_number_integer() && !value.is_number_unsigned() &&
                                     value.get<long long>() < 0)) {
    throw ConfigError("field '" + key + "' in " + where + " must be a non-negative integer");
  }
  return value.get<std::uint64_t>();
}

template <typename Fn>
auto translate(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& error) {
    throw ConfigError(error.what());
  }
}

ObjectiveSpec parse_objective(const json& doc) {
  require_object(doc, "objective");
  reject_unknown(doc, {"quadratic", "chain", "noise"}, "objective");
  ObjectiveSpec spec;
  const bool quadratic = doc.contains("quadratic");
  const bool chain = doc.contains("chain");
  if (quadratic == chain) throw ConfigError("objective needs exactly one of 'quadratic' or 'chain'");
  if (quadratic) {
    const json& q = require_object(doc.at("quadratic"), "objective.quadratic");
    reject_unknown(q, {"d", "regime", "seed"}, "objective.quadratic");
    spec.kind = ObjectiveKind::kQuadratic;
    if (q.contains("d")) spec.d = get_count(q, "d", "objective.quadratic");
    if (q.contains("regime")) {
      const auto tag = get<std::string>(q, "regime", "objective.quadratic");
      spec.regime = translate([&] { return parse_regime(tag); });
    }
    if (q.contains("seed")) spec.seed = get_seed(q, "seed", "objective.quadratic");
  } else {
    const json& c = require_object(doc.at("chain"), "objective.chain");
    reject_unknown(c, {"p", "widths", "seed"}, "objective.chain");
    spec.kind = ObjectiveKind::kChain;
    if (c.contains("p")) spec.p = get_count(c, "p", "objective.chain");
    if (c.contains("widths")) spec.widths = get_count(c, "widths", "objective.chain");
    if (c.contains("seed")) spec.seed = get_seed(c, "seed", "objective.chain");
  }
  if (doc.contains("noise")) {
    const json& n = require_object(doc.at("noise"), "objective.noise");
    reject_unknown(n, {"sigma", "seed"}, "objective.noise");
    if (n.contains("sigma")) spec.noise_sigma = get<double>(n, "sigma", "objective.noise");
    if (n.contains("seed")) spec.noise_seed = get_seed(n, "seed", "objective.noise");
  }
  return spec;
}

void parse_optimizer(const json& doc, OptimizerConfig& out) {
  if (doc.is_string()) {
    out.name = doc.get<std::string>();
    return;
  }
  require_object(doc, "optimizer");
  reject_unknown(doc, {"name", "eta", "beta", "beta1", "beta2", "zeta"}, "optimizer");
  if (!doc.contains("name")) throw ConfigError("optimizer needs a 'name'");
  out.name = get<std::string>(doc, "name", "optimizer");
  if (doc.contains("eta")) out.eta = get<double>(doc, "eta", "optimizer");
  if (doc.contains("beta")) out.beta = get<double>(doc, "beta", "optimizer");
  if (doc.contains("beta1")) out.beta1 = get<double>(doc, "beta1", "optimizer");
  if (doc.contains("beta2")) out.beta2 = get<double>(doc, "beta2", "optimizer");
  if (doc.contains("zeta")) out.zeta = get<double>(doc, "zeta", "optimizer");
}

PartitionSpec parse_partition(const json& doc) {
  PartitionSpec spec;
  if (doc.is_string()) {
    const auto tag = doc.get<std::string>();
    if (tag == "none") {
      spec.kind = PartitionKind::kNone;
    } else if (tag == "blocks") {
      spec.kind = PartitionKind::kBlocks;
    } else if (tag == "layers") {
      spec.kind = PartitionKind::kLayers;
    } else if (tag.rfind("layers:", 0) == 0) {
      spec.kind = PartitionKind::kLayers;
      const std::string count = tag.substr(7);
      if (count.empty() || count.find_first_not_of("0123456789") != std::string::npos) {
        throw ConfigError("partition '" + tag + "' needs a block count after 'layers:'");
      }
      spec.expected_layers = std::stoull(count);
    } else {
      throw ConfigError("unknown partition '" + tag + "'");
    }
    return spec;
  }
  if (!doc.is_array() || doc.empty()) {
    throw ConfigError("partition must be \"none\", \"blocks\", \"layers\" or a list of [begin, end]");
  }
  spec.kind = PartitionKind::kRanges;
  for (const json& range : doc) {
    if (!range.is_array() || range.size() != 2 || !range[0].is_number_unsigned() ||
        !range[1].is_number_unsigned()) {
      throw ConfigError("partition ranges must be [begin, end] pairs of non-negative integers");
    }
    spec.ranges.emplace_back(range[0].get<std::size_t>(), range[1].get<std::size_t>());
  }
  return spec;
}

bool finite_positive(double value) { return std::isfinite(value) && value > 0.0; }

}  // namespace

std::string to_string(SweepMetric metric) {
  return metric == SweepMetric::kFinal ? "final" : "best";
}

void ExperimentConfig::validate() const {
  if (T < 1) throw ConfigError("T must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (!finite_positive(init_loss)) throw ConfigError("init_loss must be > 0");
  if (threshold && !finite_positive(*threshold)) throw ConfigError("threshold must be > 0");
  if (stop_at_threshold && !threshold) throw ConfigError("stop_at_threshold needs a threshold");
  if (!(objective.noise_sigma >= 0.0) || !std::isfinite(objective.noise_sigma)) {
    throw ConfigError("noise sigma must be >= 0");
  }
  if (objective.kind == ObjectiveKind::kQuadratic) {
    const auto root = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(objective.d))));
    if (objective.d < 1 || root * root != objective.d) {
      throw ConfigError("quadratic d must be a positive perfect square");
    }
    if (partition.kind == PartitionKind::kLayers) {
      throw ConfigError("partition 'layers' needs a chain objective");
    }
  } else {
    if (objective.p < 1 || objective.widths < 1) throw ConfigError("chain p and widths must be >= 1");
    if (partition.kind == PartitionKind::kBlocks) {
      throw ConfigError("partition 'blocks' needs a quadratic objective");
    }
    if (partition.expected_layers && *partition.expected_layers != objective.p) {
      throw ConfigError("partition 'layers:" + std::to_string(*partition.expected_layers) +
                        "' does not match chain p = " + std::to_string(objective.p));
    }
  }
  // Hyperparameter domains are owned by the optimizer factory.
  translate([&] {
    OptimizerConfig probe = optimizer;
    const std::size_t d = objective.kind == ObjectiveKind::kQuadratic
                              ? objective.d
                              : objective.p * (objective.widths * objective.widths + objective.widths);
    if (partition.kind != PartitionKind::kNone) {
      probe.partition = partition.kind == PartitionKind::kRanges
                            ? Partition::from_ranges(d, partition.ranges)
                            : Partition::single(d);
      if (probe.name != "zo-sgd" && probe.name != "zo-adam" && probe.name != "radazo" &&
          probe.name != "meazo-grouped") {
        throw ConfigError("optimizer '" + probe.name + "' does not take a partition");
      }
    } else if (probe.name == "meazo-grouped") {
      throw ConfigError("meazo-grouped needs a partition");
    }
    make_optimizer(probe, d);
    return 0;
  });
}

ExperimentConfig parse_experiment_config(const json& doc) {
  require_object(doc, "config");
  reject_unknown(doc,
                 {"objective", "optimizer", "q", "epsilon", "distribution", "partition", "T",
                  "seeds", "eval_every", "output", "init_loss", "init_seed", "threshold",
                  "stop_at_threshold", "metric", "record_time"},
                 "config");
  ExperimentConfig config;
  if (!doc.contains("objective")) throw ConfigError("config needs an 'objective'");
  if (!doc.contains("optimizer")) throw ConfigError("config needs an 'optimizer'");
  config.objective = parse_objective(doc.at("objective"));
  parse_optimizer(doc.at("optimizer"), config.optimizer);
  if (doc.contains("q")) config.optimizer.q = get_count(doc, "q", "config");
  if (doc.contains("epsilon")) config.optimizer.epsilon = get<double>(doc, "epsilon", "config");
  if (doc.contains("distribution")) {
    const auto tag = get<std::string>(doc, "distribution", "config");
    config.optimizer.distribution = translate([&] { return parse_distribution(tag); });
  }
  if (doc.contains("partition")) config.partition = parse_partition(doc.at("partition"));
  if (doc.contains("T")) config.T = get_count(doc, "T", "config");
  if (doc.contains("seeds")) {
    const json& seeds = doc.at("seeds");
    if (!seeds.is_array()) throw ConfigError("seeds must be a list");
    config.seeds.clear();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (!seeds[i].is_number_unsigned()) throw ConfigError("seeds must be non-negative integers");
      config.seeds.push_back(seeds[i].get<std::uint64_t>());
    }
  }
  if (doc.contains("eval_every")) config.eval_every = get_count(doc, "eval_every", "config");
  if (doc.contains("output")) config.output = get<std::string>(doc, "output", "config");
  if (doc.contains("init_loss")) config.init_loss = get<double>(doc, "init_loss", "config");
  if (doc.contains("init_seed")) config.init_seed = get_seed(doc, "init_seed", "config");
  if (doc.contains("threshold")) config.threshold = get<double>(doc, "threshold", "config");
  if (doc.contains("stop_at_threshold")) {
    config.stop_at_threshold = get<bool>(doc, "stop_at_threshold", "config");
  }
  if (doc.contains("metric")) {
    const auto tag = get<std::string>(doc, "metric", "config");
    if (tag == "final") {
      config.metric = SweepMetric::kFinal;
    } else if (tag == "best") {
      config.metric = SweepMetric::kBest;
    } else {
      throw ConfigError("metric must be 'final' or 'best'");
    }
  }
  if (doc.contains("record_time")) config.record_time = get<bool>(doc, "record_time", "config");
  config.validate();
  return config;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& error) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + error.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_json_file(path));
}

json to_json(const ExperimentConfig& config) {
  json objective;
  const ObjectiveSpec& o = config.objective;
  if (o.kind == ObjectiveKind::kQuadratic) {
    objective["quadratic"] = {{"d", o.d}, {"regime", std::string(to_string(o.regime))}, {"seed", o.seed}};
  } else {
    objective["chain"] = {{"p", o.p}, {"widths", o.widths}, {"seed", o.seed}};
  }
  if (o.noise_sigma > 0.0) objective["noise"] = {{"sigma", o.noise_sigma}, {"seed", o.noise_seed}};

  json partition;
  switch (config.partition.kind) {
    case PartitionKind::kNone: partition = "none"; break;
    case PartitionKind::kBlocks: partition = "blocks"; break;
    case PartitionKind::kLayers:
      partition = config.partition.expected_layers
                      ? "layers:" + std::to_string(*config.partition.expected_layers)
                      : std::string("layers");
      break;
    case PartitionKind::kRanges:
      partition = json::array();
      for (const auto& [begin, end] : config.partition.ranges) partition.push_back({begin, end});
      break;
  }

  const OptimizerConfig& opt = config.optimizer;
  json doc = {
      {"objective", objective},
      {"optimizer",
       {{"name", opt.name}, {"eta", opt.eta}, {"beta", opt.beta}, {"beta1", opt.beta1},
        {"beta2", opt.beta2}, {"zeta", opt.zeta}}},
      {"q", opt.q},
      {"epsilon", opt.epsilon},
      {"distribution", std::string(to_string(opt.distribution))},
      {"partition", partition},
      {"T", config.T},
      {"seeds", config.seeds},
      {"eval_every", config.eval_every},
      {"output", config.output},
      {"init_loss", config.init_loss},
      {"init_seed", config.init_seed},
      {"stop_at_threshold", config.stop_at_threshold},
      {"metric", to_string(config.metric)},
      {"record_time", config.record_time},
  };
  if (config.threshold) doc["threshold"] = *config.threshold;
  return doc;
}

std::shared_ptr<const Objective> build_objective(const ObjectiveSpec& spec) {
  if (spec.kind == ObjectiveKind::kQuadratic) {
    return std::make_shared<BlockQuadratic>(BlockQuadratic::make(spec.d, spec.regime, spec.seed));
  }
  return std::make_shared<LayeredChain>(LayeredChain::make(spec.p, spec.widths, spec.seed));
}

Vector initial_point(const ExperimentConfig& config, const Objective& objective) {
  if (const auto* quad = dynamic_cast<const BlockQuadratic*>(&objective)) {
    return quad->initial_point(config.init_loss, config.init_seed);
  }
  if (const auto* chain = dynamic_cast<const LayeredChain*>(&objective)) {
    return chain->initial_point();
  }
  throw InvalidArgument("no initial point rule for this objective");
}

std::optional<Partition> resolve_partition(const PartitionSpec& spec, const Objective& objective) {
  switch (spec.kind) {
    case PartitionKind::kNone:
      return std::nullopt;
    case PartitionKind::kBlocks: {
      const auto* quad = dynamic_cast<const BlockQuadratic*>(&objective);
      if (quad == nullptr) throw ConfigError("partition 'blocks' needs a quadratic objective");
      return quad->natural_partition();
    }
    case PartitionKind::kLayers: {
      const auto* chain = dynamic_cast<const LayeredChain*>(&objective);
      if (chain == nullptr) throw ConfigError("partition 'layers' needs a chain objective");
      return chain->layer_partition();
    }
    case PartitionKind::kRanges:
      return translate([&] { return Partition::from_ranges(objective.dimension(), spec.ranges); });
  }
  return std::nullopt;
}

}  // namespace zo
