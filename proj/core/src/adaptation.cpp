#include "hcim/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>

#include "hcim/csv.hpp"

namespace hcim {

void Dataset::validate() const {
  if (static_cast<std::size_t>(x.cols()) != y.size() || ids.size() != y.size())
    throw std::invalid_argument("Dataset: x has " + std::to_string(x.cols()) + " columns, " +
                                std::to_string(y.size()) + " labels, " +
                                std::to_string(ids.size()) + " ids");
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out;
  out.x.resize(x.rows(), static_cast<Eigen::Index>(idx.size()));
  out.y.reserve(idx.size());
  out.ids.reserve(idx.size());
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] >= size()) throw std::out_of_range("Dataset::subset index out of range");
    out.x.col(static_cast<Eigen::Index>(j)) = x.col(static_cast<Eigen::Index>(idx[j]));
    out.y.push_back(y[idx[j]]);
    out.ids.push_back(ids[idx[j]]);
  }
  return out;
}

namespace {

Dataset filter(const Dataset& d, const std::vector<int>& labels, bool keep) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const bool in = std::find(labels.begin(), labels.end(), d.y[i]) != labels.end();
    if (in == keep) idx.push_back(i);
  }
  return d.subset(idx);
}

}  // namespace

Dataset Dataset::with_classes(const std::vector<int>& labels) const { return filter(*this, labels, true); }
Dataset Dataset::without_classes(const std::vector<int>& labels) const { return filter(*this, labels, false); }

Dataset Dataset::concat(const Dataset& a, const Dataset& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  if (a.x.rows() != b.x.rows()) throw std::invalid_argument("Dataset::concat: feature size mismatch");
  Dataset out;
  out.x.resize(a.x.rows(), a.x.cols() + b.x.cols());
  out.x << a.x, b.x;
  out.y = a.y;
  out.y.insert(out.y.end(), b.y.begin(), b.y.end());
  out.ids = a.ids;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  return out;
}

void DatasetSplit::validate() const {
  forget.validate();
  retain.validate();
  new_task.validate();
  const std::set<std::size_t> f(forget.ids.begin(), forget.ids.end());
  for (auto id : retain.ids)
    if (f.count(id) != 0) throw std::invalid_argument("DatasetSplit: sample " + std::to_string(id) + " in both D_f and D_r");
}

ReplayBuffer ReplayBuffer::sample_per_class(const Dataset& past, std::size_t per_class, Rng& rng) {
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < past.size(); ++i) by_class[past.y[i]].push_back(i);
  ReplayBuffer buf(per_class * by_class.size());
  std::vector<std::size_t> chosen;
  for (auto& [label, idx] : by_class) {
    rng.shuffle(std::span(idx));
    const std::size_t n = std::min(per_class, idx.size());
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n));
  }
  buf.add(past.subset(chosen));
  return buf;
}

void ReplayBuffer::add(const Dataset& examples) {
  const std::size_t room = capacity_ - std::min(capacity_, size());
  if (room == 0 || examples.empty()) return;
  std::vector<std::size_t> idx(std::min(room, examples.size()));
  std::iota(idx.begin(), idx.end(), 0);
  data_ = Dataset::concat(data_, examples.subset(idx));
}

std::string to_string(AdaptMode m) { return m == AdaptMode::Full ? "full" : "lora"; }

AdaptMode parse_adapt_mode(const std::string& s) {
  if (s == "full") return AdaptMode::Full;
  if (s == "lora") return AdaptMode::Lora;
  throw std::invalid_argument("unknown mode '" + s + "' (expected full or lora)");
}

std::string to_string(UnlearnMethod m) {
  return m == UnlearnMethod::GradientAscent ? "gradient-ascent" : "label-obfuscation";
}

UnlearnMethod parse_unlearn_method(const std::string& s) {
  if (s == "gradient-ascent") return UnlearnMethod::GradientAscent;
  if (s == "label-obfuscation") return UnlearnMethod::LabelObfuscation;
  throw std::invalid_argument("unknown unlearn method '" + s + "'");
}

void AdaptationConfig::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(full_lr >= 0.0)) throw std::invalid_argument("full_lr must be >= 0");
  if (rank == 0) throw std::invalid_argument("rank must be >= 1");
  if (!(divergence_factor > 1.0)) throw std::invalid_argument("divergence_factor must be > 1");
}

void to_json(nlohmann::json& j, const AdaptationConfig& c) {
  j = {{"lambda", c.lambda},
       {"gamma", c.gamma},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr", c.lr},
       {"full_lr", c.full_lr},
       {"mode", to_string(c.mode)},
       {"method", to_string(c.method)},
       {"seed", c.seed},
       {"rank", c.rank},
       {"lora_layers", c.lora_layers},
       {"divergence_factor", c.divergence_factor},
       {"divergence_floor", c.divergence_floor}};
}

void from_json(const nlohmann::json& j, AdaptationConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "lambda") c.lambda = value.get<double>();
    else if (key == "gamma") c.gamma = value.get<double>();
    else if (key == "epochs") c.epochs = value.get<int>();
    else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
    else if (key == "lr") c.lr = value.get<double>();
    else if (key == "full_lr") c.full_lr = value.get<double>();
    else if (key == "mode") c.mode = parse_adapt_mode(value.get<std::string>());
    else if (key == "method") c.method = parse_unlearn_method(value.get<std::string>());
    else if (key == "seed") c.seed = value.get<std::uint64_t>();
    else if (key == "rank") c.rank = value.get<std::size_t>();
    else if (key == "lora_layers") c.lora_layers = value.get<std::vector<std::string>>();
    else if (key == "divergence_factor") c.divergence_factor = value.get<double>();
    else if (key == "divergence_floor") c.divergence_floor = value.get<double>();
    else throw std::invalid_argument("adaptation: unknown key '" + key + "'");
  }
  c.validate();
}

Dataset obfuscate_labels(const Dataset& forget, int num_classes, Rng& rng) {
  if (num_classes < 2) throw std::invalid_argument("obfuscate_labels needs at least two classes");
  Dataset out = forget;
  for (auto& label : out.y) {
    if (label < 0 || label >= num_classes) throw std::invalid_argument("obfuscate_labels: label out of range");
    auto pick = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(num_classes - 1)));
    label = pick >= label ? pick + 1 : pick;
  }
  return out;
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j = {{"phase", phase},
                      {"epoch", epoch},
                      {"steps", steps},
                      {"primary_loss", primary_loss},
                      {"secondary_loss", secondary_loss},
                      {"objective", objective}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

namespace {

// Mean CE over the batch; gradients scaled by weight / n are pushed back.
double batch_term(Classifier& model, const Dataset& batch, double weight) {
  const ExecContext ctx;
  const Matrix logits = model.forward(batch.x, ctx);
  const auto n = static_cast<double>(batch.size());
  Matrix dlogits(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const LossGrad lg = softmax_cross_entropy(logits.col(j), batch.y[static_cast<std::size_t>(j)]);
    loss += lg.loss;
    dlogits.col(j) = lg.dlogits * (weight / n);
  }
  model.backward(dlogits);
  return loss / n;
}

void check_labels(const Classifier& model, const Dataset& d, const char* what) {
  for (int label : d.y)
    if (label < 0 || static_cast<std::size_t>(label) >= model.num_classes())
      throw std::invalid_argument(std::string(what) + ": label " + std::to_string(label) +
                                  " has no output row (model has " +
                                  std::to_string(model.num_classes()) + " classes)");
}

// Cycles through a shuffled order of `data`, reshuffling at wrap-around.
class BatchCursor {
 public:
  BatchCursor(const Dataset& data, Rng rng) : data_(data), rng_(std::move(rng)) {
    order_.resize(data.size());
    std::iota(order_.begin(), order_.end(), 0);
    rng_.shuffle(std::span(order_));
  }

  Dataset next(std::size_t n) {
    std::vector<std::size_t> idx;
    n = std::min(n, order_.size());
    while (idx.size() < n) {
      if (pos_ == order_.size()) {
        rng_.shuffle(std::span(order_));
        pos_ = 0;
      }
      idx.push_back(order_[pos_++]);
    }
    return data_.subset(idx);
  }

 private:
  const Dataset& data_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct Objective {
  const Dataset* primary;
  double primary_weight;
  const Dataset* secondary;
  double secondary_weight;
  TrainScope scope;
  std::string phase;
  bool guard_secondary = false;
};

void prepare_scope(Classifier& model, const AdaptationConfig& cfg, TrainScope scope, Rng& rng) {
  if (scope == TrainScope::Lora && !model.has_adapters()) {
    Rng stream = rng.split("lora-init");
    model.attach_adapters(cfg.rank, stream, cfg.lora_layers);
  }
  model.set_scope(scope);
}

RunLog run_objective(Classifier& model, const Objective& obj, const AdaptationConfig& cfg, Rng& rng,
                     CostLedger* ledger, const EpochHook& hook) {
  cfg.validate();
  prepare_scope(model, cfg, obj.scope, rng);
  const bool use_secondary = obj.secondary != nullptr && !obj.secondary->empty() && obj.secondary_weight != 0.0;
  const Dataset& driver = obj.primary->empty() && use_secondary ? *obj.secondary : *obj.primary;

  RunLog log;
  log.trainable_scalars = model.trainable_count(obj.scope);
  double guard_ref = 0.0;
  if (obj.guard_secondary && use_secondary)
    guard_ref = std::max(mean_loss(model, *obj.secondary), cfg.divergence_floor);

  Adam opt(AdamConfig{.lr = cfg.step_size()});
  Rng order_rng = rng.split("order");
  BatchCursor secondary_cursor(use_secondary ? *obj.secondary : driver, rng.split("secondary"));
  const std::size_t steps_per_epoch = (driver.size() + cfg.batch_size - 1) / cfg.batch_size;
  const bool primary_active = !obj.primary->empty();

  std::vector<std::size_t> order(driver.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(std::span(order));
    double p_sum = 0.0, s_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t begin = s * cfg.batch_size;
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      const Dataset batch = driver.subset(std::span(order).subspan(begin, end - begin));
      model.zero_grad();
      if (primary_active) {
        p_sum += batch_term(model, batch, obj.primary_weight);
        if (use_secondary) {
          s_sum += batch_term(model, secondary_cursor.next(cfg.batch_size), obj.secondary_weight);
        }
      } else {
        s_sum += batch_term(model, batch, obj.secondary_weight);
      }
      const auto params = model.trainable();
      opt.step(params, ledger);
      ++log.steps;
    }
    EpochRecord rec;
    rec.phase = obj.phase;
    rec.epoch = epoch;
    rec.steps = log.steps;
    const auto spe = static_cast<double>(std::max<std::size_t>(steps_per_epoch, 1));
    rec.primary_loss = primary_active ? p_sum / spe : 0.0;
    rec.secondary_loss = use_secondary ? s_sum / spe : 0.0;
    rec.objective = obj.primary_weight * rec.primary_loss + obj.secondary_weight * rec.secondary_loss;
    if (hook) hook(rec);
    log.epochs.push_back(rec);

    if (obj.guard_secondary && use_secondary) {
      const bool bad = !std::isfinite(rec.secondary_loss) ||
                       rec.secondary_loss > cfg.divergence_factor * guard_ref;
      if (bad) {
        log.diverged = true;
        log.diagnostic = obj.phase + ": retain loss " + format_double(rec.secondary_loss) +
                         " at epoch " + std::to_string(epoch) + " exceeds " +
                         format_double(cfg.divergence_factor) + " x " + format_double(guard_ref);
        break;
      }
    }
  }
  model.zero_grad();
  return log;
}

TrainScope adapt_scope(const AdaptationConfig& cfg) {
  return cfg.mode == AdaptMode::Full ? TrainScope::Full : TrainScope::Lora;
}

}  // namespace

ObjectiveTerms accumulate_objective_gradient(Classifier& model, const Dataset& primary,
                                             double primary_weight, const Dataset& secondary,
                                             double secondary_weight) {
  ObjectiveTerms t;
  if (!primary.empty()) t.primary_loss = batch_term(model, primary, primary_weight);
  if (!secondary.empty() && secondary_weight != 0.0)
    t.secondary_loss = batch_term(model, secondary, secondary_weight);
  return t;
}

double mean_loss(Classifier& model, const Dataset& data) {
  if (data.empty()) return 0.0;
  const Matrix logits = model.forward(data.x, ExecContext{});
  double loss = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j)
    loss += softmax_cross_entropy(logits.col(j), data.y[static_cast<std::size_t>(j)]).loss;
  return loss / static_cast<double>(data.size());
}

RunLog pretrain(Classifier& model, const Dataset& data, const AdaptationConfig& cfg, Rng& rng,
                CostLedger* ledger, const EpochHook& hook) {
  if (data.empty()) throw std::invalid_argument("pretrain: empty dataset");
  check_labels(model, data, "pretrain");
  const Dataset none;
  return run_objective(model, {&data, 1.0, &none, 0.0, TrainScope::Pretrain, "learn"}, cfg, rng,
                       ledger, hook);
}

RunLog unlearn_gradient_ascent(Classifier& model, const Dataset& forget, const Dataset& retain,
                               const AdaptationConfig& cfg, Rng& rng, CostLedger* ledger,
                               const EpochHook& hook) {
  if (forget.empty()) throw std::invalid_argument("unlearn_gradient_ascent: empty forget set");
  check_labels(model, forget, "unlearn");
  check_labels(model, retain, "unlearn");
  return run_objective(model, {&forget, -1.0, &retain, cfg.lambda, adapt_scope(cfg), "unlearn", true},
                       cfg, rng, ledger, hook);
}

RunLog unlearn_label_obfuscation(Classifier& model, const Dataset& obfuscated,
                                 const Dataset& retain, const AdaptationConfig& cfg, Rng& rng,
                                 CostLedger* ledger, const EpochHook& hook) {
  check_labels(model, obfuscated, "unlearn");
  check_labels(model, retain, "unlearn");
  return run_objective(model, {&obfuscated, 1.0, &retain, cfg.lambda, adapt_scope(cfg), "unlearn", true},
                       cfg, rng, ledger, hook);
}

RunLog continual_learn(Classifier& model, const Dataset& new_data, const ReplayBuffer& buffer,
                       const AdaptationConfig& cfg, Rng& rng, CostLedger* ledger,
                       const EpochHook& hook) {
  if (new_data.empty()) throw std::invalid_argument("continual_learn: empty new-task set");
  check_labels(model, new_data, "continual");
  check_labels(model, buffer.data(), "continual");
  return run_objective(model,
                       {&new_data, 1.0, &buffer.data(), cfg.gamma, adapt_scope(cfg), "continual"},
                       cfg, rng, ledger, hook);
}

nlohmann::json DeployReport::to_json() const {
  return {{"target", target == DeployTarget::Analogue ? "analogue" : "sram"},
          {"rm_pulses", rm_pulses},
          {"cells_changed", cells_changed},
          {"non_converged", non_converged},
          {"clipped", clipped},
          {"matrices_programmed", matrices_programmed},
          {"sram_bytes", sram_bytes}};
}

DeployReport deploy(Classifier& model, DeployTarget target, double tolerance,
                    const DeviceConfig& device, Rng& rng, CostLedger* ledger,
                    std::size_t bytes_per_element) {
  DeployReport rep;
  rep.target = target;
  if (target == DeployTarget::Sram) {
    std::uint64_t elements = 0;
    for (const auto* l : std::as_const(model).layers()) {
      if (l->has_adapter()) elements += l->adapter().element_count();
      elements += static_cast<std::uint64_t>(l->extra_weight().size());
    }
    rep.sram_bytes = elements * bytes_per_element;
    if (ledger != nullptr) ledger->record(EventKind::SramByte, rep.sram_bytes);
    return rep;
  }
  if (model.has_adapters())
    throw DeployRejected("analogue deploy rejected: model carries LoRA adapters, which stay in SRAM");
  for (auto* l : model.layers()) {
    l->fold_extra_rows();
    const bool unchanged = l->has_backbone() && l->backbone().rows() == l->backbone_rows() &&
                           l->backbone().digital_shadow() == l->weight();
    if (unchanged) continue;
    Rng stream = rng.split(l->name());
    const ProgramReport pr = l->program_backbone(tolerance, stream, ledger, device);
    rep.rm_pulses += pr.total_pulses;
    rep.cells_changed += pr.cells_changed;
    rep.non_converged += pr.non_converged;
    rep.clipped += pr.clipped;
    ++rep.matrices_programmed;
  }
  return rep;
}

ParameterSet export_adapters(const Classifier& model, const std::string& tag) {
  ParameterSet set;
  set.tag = tag;
  for (const auto* l : model.layers()) {
    if (l->has_adapter()) {
      set.tensors[l->name() + ".lora_a"] = Tensor::from_matrix(l->adapter().a);
      set.tensors[l->name() + ".lora_b"] = Tensor::from_matrix(l->adapter().b);
      set.tensors[l->name() + ".rank"] = Tensor::scalar(static_cast<double>(l->adapter().rank()));
    }
    if (l->extra_rows() > 0) set.tensors[l->name() + ".extra_weight"] = Tensor::from_matrix(l->extra_weight());
  }
  return set;
}

double MetricsReport::mean_class_accuracy(const std::vector<int>& classes) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [label, m] : per_class) {
    if (!classes.empty() && std::find(classes.begin(), classes.end(), label) == classes.end()) continue;
    sum += m.accuracy();
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double MetricsReport::class_accuracy(int label) const {
  const auto it = per_class.find(label);
  return it == per_class.end() ? 0.0 : it->second.accuracy();
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json pc = nlohmann::json::object();
  for (const auto& [label, m] : per_class)
    pc[std::to_string(label)] = {{"count", m.count}, {"correct", m.correct}, {"accuracy", m.accuracy()}};
  std::map<int, std::map<int, std::size_t>> confusion;
  for (std::size_t i = 0; i < labels.size(); ++i) ++confusion[labels[i]][predictions[i]];
  nlohmann::json conf = nlohmann::json::object();
  for (const auto& [label, row] : confusion) {
    nlohmann::json r = nlohmann::json::object();
    for (const auto& [pred, n] : row) r[std::to_string(pred)] = n;
    conf[std::to_string(label)] = r;
  }
  return {{"accuracy", accuracy}, {"samples", labels.size()}, {"per_class", pc}, {"confusion", conf}};
}

void MetricsReport::write_embeddings_csv(std::ostream& out) const {
  std::vector<std::string> header{"sample_id", "class"};
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) header.push_back("e_" + std::to_string(i));
  CsvWriter csv(out, header);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    csv.cell(ids[j]);
    csv.cell(labels[j]);
    for (Eigen::Index i = 0; i < embeddings.rows(); ++i)
      csv.cell(embeddings(i, static_cast<Eigen::Index>(j)));
    csv.end_row();
  }
}

MetricsReport evaluate(Classifier& model, const Dataset& data, const ExecContext& ctx,
                       std::size_t batch_size) {
  MetricsReport rep;
  rep.labels = data.y;
  rep.ids = data.ids;
  rep.predictions.resize(data.size());
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, data.size());
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Dataset batch = data.subset(idx);
    const Matrix logits = model.forward(batch.x, ctx);
    const Matrix& emb = model.embedding();
    if (begin == 0) rep.embeddings.resize(emb.rows(), static_cast<Eigen::Index>(data.size()));
    rep.embeddings.middleCols(static_cast<Eigen::Index>(begin), emb.cols()) = emb;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      Eigen::Index arg = 0;
      logits.col(static_cast<Eigen::Index>(j)).maxCoeff(&arg);
      const int pred = static_cast<int>(arg);
      rep.predictions[begin + j] = pred;
      auto& m = rep.per_class[batch.y[j]];
      ++m.count;
      if (pred == batch.y[j]) {
        ++m.correct;
        ++correct;
      }
    }
  }
  rep.accuracy = data.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
  return rep;
}

}  // namespace hcim
