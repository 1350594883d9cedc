#include "dlo/io.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dlo {
namespace {

constexpr int kFormatVersion = 1;

Json vec2(const Vec2& v) { return Json::array({v.x(), v.y()}); }
Vec2 vec2(const Json& j) { return Vec2(j.at(0).get<double>(), j.at(1).get<double>()); }

Json vector_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  return Json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void check_format(const Json& j, const std::string& format) {
  if (j.value("format", std::string{}) != format) {
    throw DomainError("expected a '" + format + "' document");
  }
  if (j.value("version", 0) != kFormatVersion) {
    throw DomainError("unsupported " + format + " version " + std::to_string(j.value("version", 0)));
  }
}

Json mlp_json(const Mlp& net) {
  return {{"sizes", net.sizes()}, {"params", vector_json(net.params())}};
}

void load_mlp(Mlp& net, const Json& j) {
  if (j.at("sizes").get<std::vector<int>>() != net.sizes()) {
    throw DomainError("checkpoint layer sizes do not match the model");
  }
  net.params() = vector_from(j.at("params"));
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

Json to_json(const ArtifactMeta& m) {
  return {{"config_hash", m.config_hash}, {"seed", m.seed}, {"stage", m.stage}};
}

ArtifactMeta meta_from_json(const Json& j) {
  return {j.at("config_hash").get<std::string>(), j.at("seed").get<std::uint64_t>(),
          j.at("stage").get<std::string>()};
}

std::string csv_comment(const ArtifactMeta& m) {
  return "# config_hash=" + m.config_hash + ",seed=" + std::to_string(m.seed) + ",stage=" + m.stage;
}

Json to_json(const SystemParams& p) {
  return {{"length", p.length}, {"youngs_modulus", p.youngs_modulus}};
}

SystemParams params_from_json(const Json& j) {
  return {j.at("length").get<double>(), j.at("youngs_modulus").get<double>()};
}

Json to_json(const ParamBox& b) { return {{"lo", to_json(b.lo)}, {"hi", to_json(b.hi)}}; }

ParamBox box_from_json(const Json& j) {
  ParamBox b{params_from_json(j.at("lo")), params_from_json(j.at("hi"))};
  b.validate();
  return b;
}

Json to_json(const EpisodeRecord& rec) {
  Json steps = Json::array();
  for (const EpisodeStep& s : rec.steps) {
    steps.push_back({{"obs", s.obs}, {"action", vec2(s.action)}, {"reward", s.reward}, {"done", s.done}});
  }
  Json j = {{"steps", std::move(steps)}};
  if (rec.params) j["theta"] = to_json(*rec.params);
  return j;
}

EpisodeRecord record_from_json(const Json& j) {
  EpisodeRecord rec;
  for (const Json& s : j.at("steps")) {
    EpisodeStep step;
    const auto obs = s.at("obs").get<std::vector<double>>();
    if (obs.size() != kObsDim) throw DomainError("record: observation must have 12 entries");
    std::copy(obs.begin(), obs.end(), step.obs.begin());
    step.action = vec2(s.at("action"));
    step.reward = s.at("reward").get<double>();
    step.done = s.at("done").get<bool>();
    rec.steps.push_back(step);
  }
  if (j.contains("theta")) rec.params = params_from_json(j.at("theta"));
  return rec;
}

Json to_json(const MixtureOfGaussians& mog) {
  Json means = Json::array(), chol = Json::array();
  for (int k = 0; k < mog.size(); ++k) {
    means.push_back(vec2(mog.means()[k]));
    const Chol2& l = mog.chol()[k];
    chol.push_back({l(0, 0), l(1, 0), l(1, 1)});
  }
  return {{"format", "dlo-mog"},       {"version", kFormatVersion},
          {"space", "normalized"},     {"weights", mog.weights()},
          {"means", std::move(means)}, {"chol", std::move(chol)},
          {"box", to_json(mog.box())}};
}

MixtureOfGaussians mog_from_json(const Json& j) {
  check_format(j, "dlo-mog");
  std::vector<Vec2> means;
  std::vector<Chol2> chol;
  for (const Json& m : j.at("means")) means.push_back(vec2(m));
  for (const Json& c : j.at("chol")) {
    Chol2 l = Chol2::Zero();
    l(0, 0) = c.at(0).get<double>();
    l(1, 0) = c.at(1).get<double>();
    l(1, 1) = c.at(2).get<double>();
    chol.push_back(l);
  }
  return MixtureOfGaussians(j.at("weights").get<std::vector<double>>(), std::move(means),
                            std::move(chol), box_from_json(j.at("box")));
}

Json to_json(const PolicyModel& model) {
  return {{"format", "dlo-policy"},
          {"version", kFormatVersion},
          {"hidden", model.hidden()},
          {"actor", mlp_json(model.actor())},
          {"critic", mlp_json(model.critic())},
          {"log_std", vector_json(model.log_std())}};
}

PolicyModel policy_from_json(const Json& j) {
  check_format(j, "dlo-policy");
  PolicyModel m(j.at("hidden").get<int>());
  load_mlp(m.actor(), j.at("actor"));
  load_mlp(m.critic(), j.at("critic"));
  const Eigen::VectorXd ls = vector_from(j.at("log_std"));
  if (ls.size() != 2) throw DomainError("policy: log_std must have 2 entries");
  m.log_std() = ls;
  return m;
}

Json to_json(const MdnnModel& model) {
  const MdnnConfig& c = model.config();
  const RffParams& rff = model.rff();
  Json omega = Json::array();
  for (Eigen::Index r = 0; r < rff.omega.rows(); ++r) {
    omega.push_back(vector_json(rff.omega.row(r).transpose()));
  }
  return {{"format", "dlo-mdnn"},
          {"version", kFormatVersion},
          {"config",
           {{"rff_features", c.rff_features},
            {"rff_variant", c.rff_variant == RffVariant::kCosOnly ? "cos" : "cos-sin"},
            {"rff_sigma", c.rff_sigma},
            {"train_rff", c.train_rff},
            {"include_actions", c.include_actions},
            {"hidden", c.hidden},
            {"hidden_layers", c.hidden_layers},
            {"components", c.components},
            {"init_stddev", c.init_stddev},
            {"min_stddev", c.min_stddev},
            {"head_init_scale", c.head_init_scale},
            {"horizon", c.horizon}}},
          {"rff",
           {{"omega", std::move(omega)},
            {"b", vector_json(rff.b)},
            {"sigma", vector_json(rff.sigma)},
            {"init_sigma", rff.init_sigma}}},
          {"net", mlp_json(model.net())},
          {"box", to_json(model.box())}};
}

MdnnModel mdnn_from_json(const Json& j) {
  check_format(j, "dlo-mdnn");
  const Json& cj = j.at("config");
  MdnnConfig c;
  c.rff_features = cj.at("rff_features").get<int>();
  c.rff_variant = cj.at("rff_variant").get<std::string>() == "cos" ? RffVariant::kCosOnly
                                                                    : RffVariant::kCosSin;
  c.rff_sigma = cj.at("rff_sigma").get<double>();
  c.train_rff = cj.at("train_rff").get<bool>();
  c.include_actions = cj.at("include_actions").get<bool>();
  c.hidden = cj.at("hidden").get<int>();
  c.hidden_layers = cj.at("hidden_layers").get<int>();
  c.components = cj.at("components").get<int>();
  c.init_stddev = cj.at("init_stddev").get<double>();
  c.min_stddev = cj.at("min_stddev").get<double>();
  c.head_init_scale = cj.at("head_init_scale").get<double>();
  c.horizon = cj.at("horizon").get<int>();

  const Json& rj = j.at("rff");
  RffParams rff;
  rff.variant = c.rff_variant;
  const Json& omega = rj.at("omega");
  const auto rows = static_cast<Eigen::Index>(omega.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(omega.at(0).size()) : 0;
  rff.omega.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) rff.omega.row(r) = vector_from(omega.at(r)).transpose();
  rff.b = vector_from(rj.at("b"));
  rff.sigma = vector_from(rj.at("sigma"));
  rff.init_sigma = rj.at("init_sigma").get<double>();

  Mlp net(j.at("net").at("sizes").get<std::vector<int>>(), Activation::kTanh, Activation::kIdentity);
  load_mlp(net, j.at("net"));
  return MdnnModel(c, std::move(rff), std::move(net), box_from_json(j.at("box")));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_json(const std::filesystem::path& path, const ArtifactMeta& meta, const std::string& key,
                const Json& value) {
  const Json doc = {{"meta", to_json(meta)}, {key, value}};
  write_text(path, doc.dump(1) + "\n");
}

Json read_json(const std::filesystem::path& path, const std::string& key, ArtifactMeta* meta) {
  Json doc;
  try {
    doc = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw DomainError(path.string() + ": " + e.what());
  }
  if (!doc.contains(key)) throw DomainError(path.string() + ": missing '" + key + "'");
  if (meta != nullptr) *meta = meta_from_json(doc.at("meta"));
  return doc.at(key);
}

void write_records_jsonl(const std::filesystem::path& path, const ArtifactMeta& meta,
                         std::span<const EpisodeRecord> records) {
  std::ostringstream s;
  s << Json{{"meta", to_json(meta)}}.dump() << '\n';
  for (const EpisodeRecord& r : records) s << to_json(r).dump() << '\n';
  write_text(path, s.str());
}

std::vector<EpisodeRecord> read_records_jsonl(const std::filesystem::path& path, ArtifactMeta* meta) {
  std::istringstream in(read_text(path));
  std::string line;
  std::vector<EpisodeRecord> out;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const Json j = Json::parse(line);
    if (first && j.contains("meta")) {
      if (meta != nullptr) *meta = meta_from_json(j.at("meta"));
    } else {
      out.push_back(record_from_json(j));
    }
    first = false;
  }
  return out;
}

void write_dataset_jsonl(const std::filesystem::path& path, const ArtifactMeta& meta,
                         std::span<const SimTrajectory> data) {
  std::ostringstream s;
  s << Json{{"meta", to_json(meta)}}.dump() << '\n';
  for (const SimTrajectory& t : data) {
    Json j = to_json(t.record);
    j["theta"] = to_json(t.theta);
    s << j.dump() << '\n';
  }
  write_text(path, s.str());
}

void write_learning_curve_csv(const std::filesystem::path& path, const ArtifactMeta& meta,
                              std::span<const CurvePoint> curve) {
  std::ostringstream s;
  s << csv_comment(meta) << "\nstep,mean_episode_reward,episodes\n";
  for (const CurvePoint& p : curve) {
    s << p.step << ',' << format_double(p.mean_episode_reward) << ',' << p.episodes << '\n';
  }
  write_text(path, s.str());
}

void write_episode_rewards_csv(const std::filesystem::path& path, const ArtifactMeta& meta,
                               std::span<const double> rewards, std::span<const long> end_steps) {
  std::ostringstream s;
  s << csv_comment(meta) << "\nepisode,end_step,reward\n";
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    s << i << ',' << (i < end_steps.size() ? end_steps[i] : 0) << ',' << format_double(rewards[i])
      << '\n';
  }
  write_text(path, s.str());
}

void write_heatmap(const std::filesystem::path& dir, const std::string& prefix,
                   const ArtifactMeta& meta, const Heatmap& h) {
  std::ostringstream m;
  m << csv_comment(meta) << ",integral=" << format_double(h.integral) << '\n';
  for (Eigen::Index r = 0; r < h.density.rows(); ++r) {
    for (Eigen::Index c = 0; c < h.density.cols(); ++c) {
      if (c > 0) m << ',';
      m << format_double(h.density(r, c));
    }
    m << '\n';
  }
  write_text(dir / (prefix + ".csv"), m.str());
  auto axis = [&](const std::vector<double>& values, const std::string& name) {
    std::ostringstream s;
    s << csv_comment(meta) << '\n' << name << '\n';
    for (double v : values) s << format_double(v) << '\n';
    return s.str();
  };
  write_text(dir / (prefix + "_length_axis.csv"), axis(h.length_axis, "length_m"));
  write_text(dir / (prefix + "_modulus_axis.csv"), axis(h.modulus_axis, "youngs_modulus_pa"));
}

void write_loss_curves_csv(const std::filesystem::path& path, const ArtifactMeta& meta,
                           const std::vector<std::vector<double>>& curves) {
  std::ostringstream s;
  s << csv_comment(meta) << "\niteration,epoch,loss\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    for (std::size_t e = 0; e < curves[i].size(); ++e) {
      s << i << ',' << e << ',' << format_double(curves[i][e]) << '\n';
    }
  }
  write_text(path, s.str());
}

void write_eval_grid(const std::filesystem::path& dir, const ArtifactMeta& meta, const EvalGrid& grid) {
  std::filesystem::create_directories(dir);
  std::ostringstream summary;
  summary << csv_comment(meta) << "\npolicy,env,complete,mean_episode_reward,error\n";
  for (const EvalCell& cell : grid.cells) {
    summary << cell.policy << ',' << cell.env << ',' << (cell.complete ? 1 : 0) << ','
            << format_double(cell.mean_episode_reward) << ',' << Json(cell.error).dump() << '\n';
    if (!cell.complete) continue;

    std::ostringstream path;
    path << csv_comment(meta) << "\nstep,mean_dx,mean_dz,std_dx,std_dz\n";
    for (std::size_t t = 0; t < cell.path.mean.size(); ++t) {
      path << t << ',' << format_double(cell.path.mean[t].x()) << ','
           << format_double(cell.path.mean[t].y()) << ',' << format_double(cell.path.stddev[t].x())
           << ',' << format_double(cell.path.stddev[t].y()) << '\n';
    }
    write_text(dir / (cell.label() + "_path.csv"), path.str());

    std::ostringstream rew;
    rew << csv_comment(meta) << "\nstep,mean_reward,episodes\n";
    for (std::size_t t = 0; t < cell.mean_step_reward.size(); ++t) {
      rew << t << ',' << format_double(cell.mean_step_reward[t]) << ',' << cell.step_count[t] << '\n';
    }
    write_text(dir / (cell.label() + "_rewards.csv"), rew.str());
  }
  write_text(dir / "summary.csv", summary.str());

  std::ostringstream m;
  m << csv_comment(meta) << "\nlabel";
  for (const EvalCell& c : grid.cells) m << ',' << c.label();
  m << '\n';
  for (std::size_t i = 0; i < grid.cells.size(); ++i) {
    m << grid.cells[i].label();
    for (std::size_t j = 0; j < grid.cells.size(); ++j) {
      m << ',' << format_double(grid.dtw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
    m << '\n';
  }
  write_text(dir / "dtw_matrix.csv", m.str());
}

}  // namespace dlo
