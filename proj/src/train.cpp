#include "vrdone/train.hpp"

#include "vrdone/log.hpp"
#include "vrdone/loss.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace vrdone {

namespace fs = std::filesystem;

LrSchedule::LrSchedule(const OptimConfig& cfg, long total_steps)
    : lr_(cfg.lr), min_lr_(cfg.min_lr), total_(std::max(1L, total_steps)) {
  warmup_ = cfg.warmup_steps >= 0 ? cfg.warmup_steps
                                  : static_cast<long>(std::llround(cfg.warmup_fraction * static_cast<double>(total_)));
  warmup_ = std::min(warmup_, total_);
}

double LrSchedule::operator()(long step) const {
  if (step < warmup_) return lr_ * static_cast<double>(step) / static_cast<double>(warmup_);
  const long span = std::max(1L, total_ - warmup_);
  const double progress = std::min(1.0, static_cast<double>(step - warmup_) / static_cast<double>(span));
  return min_lr_ + 0.5 * (lr_ - min_lr_) * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(nn::ParameterStore& store, const OptimConfig& cfg) : store_(store), cfg_(cfg) {
  for (const auto& p : store_.params()) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& params = store_.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    nn::Parameter& p = *params[i];
    if (p.weight_decay && cfg_.weight_decay > 0) p.value *= 1.0 - lr * cfg_.weight_decay;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseProduct(p.grad);
    p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

Ema::Ema(const nn::ParameterStore& store, double decay, bool warmup) : decay_(decay), warmup_(warmup) {
  for (const auto& p : store.params()) shadow_.push_back(p->value);
}

double Ema::decay_at(long step) const {
  if (!warmup_) return decay_;
  return std::min(decay_, (1.0 + static_cast<double>(step)) / (10.0 + static_cast<double>(step)));
}

void Ema::update(const nn::ParameterStore& store, long step) {
  const double d = decay_at(step);
  const auto& params = store.params();
  for (std::size_t i = 0; i < params.size(); ++i) shadow_[i] = d * shadow_[i] + (1.0 - d) * params[i]->value;
}

void Ema::copy_to(nn::ParameterStore& store) const {
  auto& params = store.params();
  if (params.size() != shadow_.size()) throw std::invalid_argument("Ema::copy_to: parameter count differs");
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = shadow_[i];
}

double clip_grad_norm(nn::ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& p : store.params()) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& p : store.params()) p->grad *= s;
  }
  return norm;
}

std::vector<PairSample> epoch_pairs(const Dataset& data, const RunConfig& cfg, int epoch) {
  std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), std::uint64_t{0x65706f6368}, static_cast<std::uint64_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::vector<PairSample> pairs;
  for (const auto& v : data.videos) {
    auto p = build_training_pairs(v, cfg.data.max_len, cfg.model.num_queries, rng);
    std::move(p.begin(), p.end(), std::back_inserter(pairs));
  }
  std::shuffle(pairs.begin(), pairs.end(), rng);
  return pairs;
}

namespace {

long batches_in(std::size_t pairs, int batch) {
  return static_cast<long>((pairs + static_cast<std::size_t>(batch) - 1) / static_cast<std::size_t>(batch));
}

std::vector<long> count_epoch_batches(const Dataset& data, const RunConfig& cfg) {
  std::vector<long> out;
  for (int e = 0; e < cfg.data.epochs; ++e) out.push_back(batches_in(epoch_pairs(data, cfg, e).size(), cfg.data.batch_size));
  return out;
}

long schedule_length(const std::vector<long>& batches, long max_steps) {
  long total = 0;
  for (long b : batches) total += b;
  return max_steps > 0 ? std::min(total, max_steps) : total;
}

void check_dataset(const Dataset& data, const RunConfig& cfg) {
  if (data.videos.empty()) throw DataError("training dataset is empty");
  if (data.index.feature_dim != cfg.model.feature_dim) {
    throw ConfigError("model.feature_dim (" + std::to_string(cfg.model.feature_dim) + ") differs from dataset feature_dim (" +
                      std::to_string(data.index.feature_dim) + ")");
  }
  if (static_cast<int>(data.index.predicates.size()) != cfg.model.num_predicates) {
    throw ConfigError("model.num_predicates (" + std::to_string(cfg.model.num_predicates) +
                      ") differs from the dataset vocabulary size (" + std::to_string(data.index.predicates.size()) + ")");
  }
  if (cfg.model.extra_dim > 0 && data.index.extra_dim != cfg.model.extra_dim) {
    throw ConfigError("model.extra_dim differs from dataset extra_dim");
  }
}

}  // namespace

Trainer::Trainer(RunConfig cfg, Dataset train)
    : cfg_((cfg.validate(), check_dataset(train, cfg), std::move(cfg))),
      data_(std::move(train)),
      epoch_batches_(count_epoch_batches(data_, cfg_)),
      model_(std::make_unique<VrdModel>(cfg_.model)),
      opt_(model_->params(), cfg_.optim),
      ema_(model_->params(), cfg_.optim.ema_decay, cfg_.optim.ema_warmup),
      schedule_(cfg_.optim, schedule_length(epoch_batches_, cfg_.data.max_steps)) {
  if (schedule_.total() == 0 || epoch_batches_.front() == 0) throw DataError("dataset yields no training pairs");
}

StepLog Trainer::train_step(const std::vector<PairSample>& batch, int epoch) {
  nn::ParameterStore& store = model_->params();
  store.zero_grad();
  StepLog log;
  log.step = step_;
  log.epoch = epoch;
  log.lr = schedule_(step_);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    std::seed_seq seq{static_cast<std::uint64_t>(cfg_.seed), static_cast<std::uint64_t>(step_), static_cast<std::uint64_t>(i)};
    std::mt19937_64 rng(seq);
    nn::Graph graph;
    nn::Context ctx{graph, true, &rng};
    const ModelOutput out = model_->forward(ctx, batch[i]);
    const LossTerms terms = set_prediction_loss(out, batch[i].gt, batch[i].valid, cfg_.loss);
    ag::backward(ag::scale(terms.total, inv));
    graph.accumulate_into_params();
    log.total += terms.total.item() * inv;
    log.cls += terms.cls * inv;
    log.focal += terms.focal * inv;
    log.dice += terms.dice * inv;
  }
  log.grad_norm = clip_grad_norm(store, cfg_.optim.grad_clip);
  opt_.step(log.lr);
  ++step_;
  ema_.update(store, step_);
  return log;
}

void Trainer::run(long stop_at, const std::function<void(const StepLog&)>& on_step) {
  const long end = stop_at > 0 ? std::min(stop_at, schedule_.total()) : schedule_.total();
  const fs::path out_dir = cfg_.output.dir;
  long epoch_start = 0;
  for (int e = 0; e < cfg_.data.epochs && step_ < end; ++e) {
    const long nb = epoch_batches_[static_cast<std::size_t>(e)];
    if (step_ >= epoch_start + nb) {
      epoch_start += nb;
      continue;
    }
    const std::vector<PairSample> pairs = epoch_pairs(data_, cfg_, e);
    const auto bs = static_cast<std::size_t>(cfg_.data.batch_size);
    for (long b = step_ - epoch_start; b < nb && step_ < end; ++b) {
      const std::size_t lo = static_cast<std::size_t>(b) * bs;
      const std::vector<PairSample> batch(pairs.begin() + static_cast<std::ptrdiff_t>(lo),
                                          pairs.begin() + static_cast<std::ptrdiff_t>(std::min(lo + bs, pairs.size())));
      const StepLog log = train_step(batch, e);
      if (log.step % cfg_.output.log_every == 0) {
        log::info("epoch {} step {}/{} lr {:.3e} loss {:.5f} (cls {:.4f} focal {:.4f} dice {:.4f})", e, log.step + 1,
                  schedule_.total(), log.lr, log.total, log.cls, log.focal, log.dice);
      }
      if (on_step) on_step(log);
    }
    epoch_start += nb;
    const bool epoch_done = step_ == epoch_start;
    if (epoch_done && cfg_.output.checkpoint_every > 0 && (e + 1) % cfg_.output.checkpoint_every == 0 &&
        step_ < schedule_.total()) {
      save_checkpoint(out_dir / ("epoch_" + std::to_string(e + 1) + ".ckpt"));
    }
  }
}

std::unique_ptr<VrdModel> Trainer::ema_model() const {
  auto m = std::make_unique<VrdModel>(cfg_.model);
  ema_.copy_to(m->params());
  return m;
}

// Archive layout (little endian): "VRDCKPT1", u32 version, i64 step, u32 count, then per
// parameter: u32 name length, name bytes, i64 rows, i64 cols, and rows*cols float64 for
// value, EMA shadow, Adam first moment and Adam second moment, row-major.
namespace {

constexpr char kMagic[8] = {'V', 'R', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kArchiveVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& where) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError(where + ": truncated checkpoint");
  return v;
}

void put_matrix(std::ostream& os, const Matrix& m) {
  os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void get_matrix(std::istream& is, Matrix& m, const std::string& where) {
  is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!is) throw DataError(where + ": truncated checkpoint");
}

struct Archive {
  long step = 0;
  struct Entry {
    std::string name;
    Matrix value, ema, m, v;
  };
  std::vector<Entry> entries;
};

Archive read_archive(const fs::path& path) {
  const std::string where = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError(where + ": cannot open");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw DataError(where + ": not a checkpoint archive");
  if (get<std::uint32_t>(is, where) != kArchiveVersion) throw DataError(where + ": unsupported archive version");
  Archive a;
  a.step = static_cast<long>(get<std::int64_t>(is, where));
  const auto count = get<std::uint32_t>(is, where);
  for (std::uint32_t i = 0; i < count; ++i) {
    Archive::Entry e;
    e.name.resize(get<std::uint32_t>(is, where));
    is.read(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const auto rows = static_cast<Index>(get<std::int64_t>(is, where));
    const auto cols = static_cast<Index>(get<std::int64_t>(is, where));
    if (rows < 0 || cols < 0) throw DataError(where + ": bad shape for " + e.name);
    for (Matrix* m : {&e.value, &e.ema, &e.m, &e.v}) {
      m->resize(rows, cols);
      get_matrix(is, *m, where);
    }
    a.entries.push_back(std::move(e));
  }
  return a;
}

fs::path meta_path(const fs::path& p) { return fs::path(p.string() + ".json"); }

/// Matches archive entries to the store by name and shape.
template <typename F>
void for_each_entry(const Archive& a, nn::ParameterStore& store, const std::string& where, F&& f) {
  if (a.entries.size() != store.params().size()) throw DataError(where + ": parameter count differs from model");
  for (std::size_t i = 0; i < a.entries.size(); ++i) {
    const auto& e = a.entries[i];
    nn::Parameter& p = *store.params()[i];
    if (p.name != e.name || p.value.rows() != e.value.rows() || p.value.cols() != e.value.cols()) {
      throw DataError(where + ": parameter " + e.name + " does not match model parameter " + p.name);
    }
    f(i, p, e);
  }
}

}  // namespace

void Trainer::save_checkpoint(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError(path.string() + ": cannot write");
    os.write(kMagic, 8);
    put(os, kArchiveVersion);
    put(os, static_cast<std::int64_t>(step_));
    const auto& params = model_->params().params();
    put(os, static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const nn::Parameter& p = *params[i];
      put(os, static_cast<std::uint32_t>(p.name.size()));
      os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      put(os, static_cast<std::int64_t>(p.value.rows()));
      put(os, static_cast<std::int64_t>(p.value.cols()));
      put_matrix(os, p.value);
      put_matrix(os, ema_.shadow()[i]);
      put_matrix(os, opt_.first_moments()[i]);
      put_matrix(os, opt_.second_moments()[i]);
    }
    if (!os) throw DataError(path.string() + ": write failed");
  }
  const nlohmann::json meta = {{"schema_version", 1}, {"step", step_}, {"config", cfg_}};
  std::ofstream js(meta_path(path));
  js << meta.dump(1) << '\n';
  if (!js) throw DataError(meta_path(path).string() + ": write failed");
  log::info("checkpoint {} (step {})", path.string(), step_);
}

void Trainer::resume(const fs::path& path) {
  const Archive a = read_archive(path);
  for_each_entry(a, model_->params(), path.string(), [&](std::size_t i, nn::Parameter& p, const Archive::Entry& e) {
    p.value = e.value;
    ema_.shadow()[i] = e.ema;
    opt_.first_moments()[i] = e.m;
    opt_.second_moments()[i] = e.v;
  });
  step_ = a.step;
  opt_.set_steps(a.step);
  log::info("resumed from {} at step {}", path.string(), step_);
}

CheckpointMeta read_checkpoint_meta(const fs::path& path) {
  const fs::path mp = meta_path(path);
  std::ifstream is(mp);
  if (!is) throw DataError(mp.string() + ": cannot open");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(mp.string() + ": " + e.what());
  }
  CheckpointMeta m;
  m.schema_version = detail::read_required<int>(j, "schema_version", "checkpoint");
  if (m.schema_version != 1) throw DataError(mp.string() + ": unsupported schema_version");
  m.step = detail::read_required<long>(j, "step", "checkpoint");
  m.config = detail::read_required<RunConfig>(j, "config", "checkpoint");
  return m;
}

std::unique_ptr<VrdModel> load_model(const fs::path& path, bool use_ema) {
  const CheckpointMeta meta = read_checkpoint_meta(path);
  auto model = std::make_unique<VrdModel>(meta.config.model);
  const Archive a = read_archive(path);
  for_each_entry(a, model->params(), path.string(),
                 [&](std::size_t, nn::Parameter& p, const Archive::Entry& e) { p.value = use_ema ? e.ema : e.value; });
  return model;
}

}  // namespace vrdone
