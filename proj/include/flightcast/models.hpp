#pragma once

// LSTM encoder-decoder forecasters, with and without Luong attention.
//
// Encoder input per past step:  [z(y), z(swim)?]
// Decoder input per future step: [previous z(y_hat); emb(hour); emb(qtr); emb(dow); emb(month)]
// Output head: dense(h) or, with attention, dense(tanh(W_c [context; h])).

#include "flightcast/error.hpp"
#include "flightcast/layers.hpp"
#include "flightcast/model_file.hpp"
#include "flightcast/pipeline.hpp"
#include "flightcast/random.hpp"
#include "flightcast/tensor.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace flightcast {

struct EmbeddingDims {
    std::size_t hour = default_embedding_dim(24);
    std::size_t qtr = default_embedding_dim(4);
    std::size_t day_of_week = default_embedding_dim(7);
    std::size_t month = default_embedding_dim(12);

    std::size_t total() const { return hour + qtr + day_of_week + month; }

    friend bool operator==(const EmbeddingDims&, const EmbeddingDims&) = default;
};

struct ModelConfig {
    std::size_t n_lag = 10;        // p
    std::size_t n_look_ahead = 8;  // tau_max
    std::size_t hidden_dim = 64;
    EmbeddingDims embedding;
    bool use_attention = true;
    AttentionKind attention_kind = AttentionKind::general;
    bool use_swim = false; // SWIM counts as an observed input next to the demand history

    std::size_t encoder_input_dim() const { return use_swim ? 2 : 1; }
    std::size_t decoder_input_dim() const { return 1 + embedding.total(); }

    void validate() const {
        if (n_lag < 1 || n_look_ahead < 1 || hidden_dim < 1) {
            throw ContractError("model config requires n_lag, n_look_ahead and hidden_dim >= 1");
        }
        if (embedding.hour < 1 || embedding.qtr < 1 || embedding.day_of_week < 1 || embedding.month < 1) {
            throw ContractError("embedding dimensions must be >= 1");
        }
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"n_lag", c.n_lag},
                       {"n_look_ahead", c.n_look_ahead},
                       {"hidden_dim", c.hidden_dim},
                       {"embedding_dims",
                        {{"hour", c.embedding.hour}, {"qtr", c.embedding.qtr}, {"day_of_week", c.embedding.day_of_week}, {"month", c.embedding.month}}},
                       {"use_attention", c.use_attention},
                       {"attention_kind", to_string(c.attention_kind)},
                       {"observed_inputs", c.use_swim ? nlohmann::json::array({"swim"}) : nlohmann::json::array()}};
}

/// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.n_lag = j.value("n_lag", c.n_lag);
    c.n_look_ahead = j.value("n_look_ahead", c.n_look_ahead);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    if (j.contains("embedding_dims")) {
        const auto& e = j.at("embedding_dims");
        c.embedding.hour = e.value("hour", c.embedding.hour);
        c.embedding.qtr = e.value("qtr", c.embedding.qtr);
        c.embedding.day_of_week = e.value("day_of_week", c.embedding.day_of_week);
        c.embedding.month = e.value("month", c.embedding.month);
    }
    c.use_attention = j.value("use_attention", c.use_attention);
    if (j.contains("attention_kind")) {
        c.attention_kind = parse_attention_kind(j.at("attention_kind").get<std::string>());
    }
    if (j.contains("observed_inputs")) {
        c.use_swim = false;
        for (const auto& name : j.at("observed_inputs")) {
            if (name.get<std::string>() != "swim") {
                throw ConfigError("unknown observed input '" + name.get<std::string>() + "' (supported: swim)");
            }
            c.use_swim = true;
        }
    }
}

struct TrainingConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    double clip_norm = 5.0;
    double teacher_forcing_ratio = 0.5;
    std::uint64_t seed = 42;

    void validate() const {
        if (epochs < 1 || batch_size < 1) {
            throw ContractError("training needs epochs >= 1 and batch_size >= 1");
        }
        if (!(learning_rate >= 0.0) || !(clip_norm > 0.0)) {
            throw ContractError("training needs learning_rate >= 0 and clip_norm > 0");
        }
        if (!(teacher_forcing_ratio >= 0.0 && teacher_forcing_ratio <= 1.0)) {
            throw ContractError("teacher_forcing_ratio must lie in [0, 1]");
        }
    }
};

inline void to_json(nlohmann::json& j, const TrainingConfig& c) {
    j = nlohmann::json{{"epochs", c.epochs},           {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                       {"clip_norm", c.clip_norm},     {"teacher_forcing_ratio", c.teacher_forcing_ratio},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainingConfig& c) {
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.teacher_forcing_ratio = j.value("teacher_forcing_ratio", c.teacher_forcing_ratio);
    c.seed = j.value("seed", c.seed);
}

// ---------------------------------------------------------------------------

enum CalendarFeature : std::size_t { kHour = 0, kQtr = 1, kDayOfWeek = 2, kMonth = 3 };

struct Seq2SeqModel {
    ModelConfig config;
    Scaler scaler;
    LstmParams encoder;
    LstmParams decoder;
    std::array<EmbeddingTable, 4> embeddings; // hour, qtr, day_of_week, month
    std::optional<AttentionParams> attention;
    DenseParams head;

    static Seq2SeqModel create(const ModelConfig& config, const Scaler& scaler, std::uint64_t seed) {
        config.validate();
        if (config.use_swim && !scaler.swim) {
            throw ContractError("model uses SWIM inputs but the scaler has no SWIM statistics");
        }
        Pcg32 rng(mix_seed(seed, 0x1417), 0x5eed);
        Seq2SeqModel m;
        m.config = config;
        m.scaler = scaler;
        const std::size_t h = config.hidden_dim;
        m.encoder = LstmParams::create(config.encoder_input_dim(), h, rng);
        m.decoder = LstmParams::create(config.decoder_input_dim(), h, rng);
        m.embeddings = {EmbeddingTable::create("hour", 24, config.embedding.hour, rng),
                        EmbeddingTable::create("qtr", 4, config.embedding.qtr, rng),
                        EmbeddingTable::create("day_of_week", 7, config.embedding.day_of_week, rng),
                        EmbeddingTable::create("month", 12, config.embedding.month, rng)};
        if (config.use_attention) {
            m.attention = AttentionParams::create(config.attention_kind, h, rng);
        }
        m.head = DenseParams::create(h, 1, rng);
        return m;
    }

    std::string kind() const { return config.use_attention ? "seq2seq_attention" : "seq2seq"; }

    /// Stable names; also the block names of the model file.
    std::vector<std::pair<std::string, Tensor>> named_parameters() const {
        std::vector<std::pair<std::string, Tensor>> out;
        auto lstm = [&out](const std::string& prefix, const LstmParams& p) {
            out.emplace_back(prefix + ".w_i", p.w_i);
            out.emplace_back(prefix + ".w_f", p.w_f);
            out.emplace_back(prefix + ".w_o", p.w_o);
            out.emplace_back(prefix + ".w_g", p.w_g);
            out.emplace_back(prefix + ".u_i", p.u_i);
            out.emplace_back(prefix + ".u_f", p.u_f);
            out.emplace_back(prefix + ".u_o", p.u_o);
            out.emplace_back(prefix + ".u_g", p.u_g);
            out.emplace_back(prefix + ".b_i", p.b_i);
            out.emplace_back(prefix + ".b_f", p.b_f);
            out.emplace_back(prefix + ".b_o", p.b_o);
            out.emplace_back(prefix + ".b_g", p.b_g);
        };
        lstm("encoder", encoder);
        lstm("decoder", decoder);
        for (const auto& e : embeddings) {
            out.emplace_back("embedding." + e.feature, e.weights);
        }
        if (attention) {
            if (attention->w_a) {
                out.emplace_back("attention.w_a", *attention->w_a);
            }
            out.emplace_back("attention.w_c", attention->w_c);
        }
        out.emplace_back("head.weight", head.weight);
        out.emplace_back("head.bias", head.bias);
        return out;
    }

    std::vector<Tensor> parameters() const {
        std::vector<Tensor> out;
        for (auto& [name, t] : named_parameters()) out.push_back(t);
        return out;
    }

    /// Deep copy; the copy shares no tensor storage with this model.
    Seq2SeqModel clone() const {
        Seq2SeqModel m = *this;
        auto copy_lstm = [](LstmParams& p) {
            for (Tensor* t : {&p.w_i, &p.w_f, &p.w_o, &p.w_g, &p.u_i, &p.u_f, &p.u_o, &p.u_g, &p.b_i, &p.b_f, &p.b_o, &p.b_g}) *t = t->clone();
        };
        copy_lstm(m.encoder);
        copy_lstm(m.decoder);
        for (auto& e : m.embeddings) e.weights = e.weights.clone();
        if (m.attention) {
            if (m.attention->w_a) m.attention->w_a = m.attention->w_a->clone();
            m.attention->w_c = m.attention->w_c.clone();
        }
        m.head.weight = m.head.weight.clone();
        m.head.bias = m.head.bias.clone();
        return m;
    }
};

// ---------------------------------------------------------------------------
// Forward passes

struct EncoderOutput {
    Tensor states; // [p x hidden] (single) or [B x p x hidden] (batch)
    LstmState final_state;
};

/// Runs the encoder from a zero state over `past` (p normalized input vectors).
inline EncoderOutput encode(const Seq2SeqModel& model, const std::vector<std::vector<double>>& past) {
    if (past.size() != model.config.n_lag) {
        throw ContractError("encode: expected " + std::to_string(model.config.n_lag) + " past steps, got " + std::to_string(past.size()));
    }
    const std::size_t hidden = model.config.hidden_dim;
    LstmState state = LstmState::zeros(hidden);
    std::vector<Tensor> rows;
    rows.reserve(past.size());
    for (const auto& x : past) {
        if (x.size() != model.config.encoder_input_dim()) {
            throw ContractError("encode: input vector has width " + std::to_string(x.size()) + ", expected " +
                                std::to_string(model.config.encoder_input_dim()));
        }
        state = lstm_cell_step(model.encoder, Tensor({x.size()}, x), state);
        rows.push_back(reshape(state.h, {1, hidden}));
    }
    return {concat(rows, 0), state};
}

namespace detail {

inline void check_window(const ModelConfig& config, const SupervisedWindow& w, bool need_targets) {
    if (w.past_y.size() != config.n_lag || w.past_x.size() != config.n_lag) {
        throw ContractError("window has " + std::to_string(w.past_y.size()) + " past steps, model expects n_lag = " +
                            std::to_string(config.n_lag));
    }
    if (w.future_f.size() != config.n_look_ahead) {
        throw ContractError("window has " + std::to_string(w.future_f.size()) + " future steps, model expects n_look_ahead = " +
                            std::to_string(config.n_look_ahead));
    }
    if (need_targets && w.targets.size() != config.n_look_ahead) {
        throw ContractError("training window lacks its " + std::to_string(config.n_look_ahead) + " targets");
    }
    if (config.use_swim) {
        for (const auto& x : w.past_x) {
            if (x.size() != 1) {
                throw ContractError("model expects one SWIM value per past step");
            }
        }
    }
}

/// Normalized, batch-major inputs for a set of windows.
struct BatchInputs {
    std::size_t batch = 0;
    std::vector<Tensor> encoder_steps;                      // p tensors [B x in]
    std::vector<std::array<std::vector<std::size_t>, 4>> calendar; // per decoder step, per feature: B indices
    Tensor last_observed;                                   // [B x 1]
    std::vector<Tensor> target_steps;                       // tau tensors [B x 1] (training only)
    Tensor targets;                                         // [B x tau] (training only)
};

inline BatchInputs make_batch_inputs(const Seq2SeqModel& model, std::span<const SupervisedWindow* const> windows, bool with_targets) {
    const ModelConfig& cfg = model.config;
    BatchInputs in;
    in.batch = windows.size();
    const std::size_t width = cfg.encoder_input_dim();
    for (std::size_t k = 0; k < cfg.n_lag; ++k) {
        std::vector<double> values(in.batch * width);
        for (std::size_t b = 0; b < in.batch; ++b) {
            values[b * width] = model.scaler.demand.apply(windows[b]->past_y[k]);
            if (cfg.use_swim) {
                values[b * width + 1] = model.scaler.swim->apply(windows[b]->past_x[k][0]);
            }
        }
        in.encoder_steps.emplace_back(Shape{in.batch, width}, std::move(values));
    }
    in.calendar.resize(cfg.n_look_ahead);
    for (std::size_t t = 0; t < cfg.n_look_ahead; ++t) {
        for (auto& v : in.calendar[t]) v.resize(in.batch);
        for (std::size_t b = 0; b < in.batch; ++b) {
            const Calendar& c = windows[b]->future_f[t].calendar;
            in.calendar[t][kHour][b] = static_cast<std::size_t>(c.hour);
            in.calendar[t][kQtr][b] = static_cast<std::size_t>(c.qtr - 1);
            in.calendar[t][kDayOfWeek][b] = static_cast<std::size_t>(c.day_of_week - 1);
            in.calendar[t][kMonth][b] = static_cast<std::size_t>(c.month - 1);
        }
    }
    std::vector<double> last(in.batch);
    for (std::size_t b = 0; b < in.batch; ++b) last[b] = model.scaler.demand.apply(windows[b]->past_y.back());
    in.last_observed = Tensor({in.batch, 1}, std::move(last));
    if (with_targets) {
        std::vector<double> all(in.batch * cfg.n_look_ahead);
        for (std::size_t t = 0; t < cfg.n_look_ahead; ++t) {
            std::vector<double> col(in.batch);
            for (std::size_t b = 0; b < in.batch; ++b) {
                col[b] = model.scaler.demand.apply(windows[b]->targets[t]);
                all[b * cfg.n_look_ahead + t] = col[b];
            }
            in.target_steps.emplace_back(Shape{in.batch, 1}, std::move(col));
        }
        in.targets = Tensor({in.batch, cfg.n_look_ahead}, std::move(all));
    }
    return in;
}

inline Tensor calendar_embedding(const Seq2SeqModel& model, const std::array<std::vector<std::size_t>, 4>& indices) {
    std::vector<Tensor> parts;
    parts.reserve(4);
    for (std::size_t f = 0; f < 4; ++f) {
        parts.push_back(embedding_lookup(model.embeddings[f], indices[f]));
    }
    return concat(parts, 1);
}

} // namespace detail

/// Decides, per decoder step after the first, whether the true previous target is fed.
using TeacherForcing = std::function<bool(std::size_t step)>;

/// Normalized predictions [B x tau_max]. With `teacher_forcing` empty the decoder
/// always feeds back its own output.
inline Tensor decode_batch(const Seq2SeqModel& model, const detail::BatchInputs& in, const TeacherForcing& teacher_forcing = {}) {
    const ModelConfig& cfg = model.config;
    const std::size_t hidden = cfg.hidden_dim;
    LstmState state = LstmState::zeros(in.batch, hidden);
    std::vector<Tensor> encoder_rows;
    if (model.attention) encoder_rows.reserve(cfg.n_lag);
    for (const Tensor& x : in.encoder_steps) {
        state = lstm_cell_step(model.encoder, x, state);
        if (model.attention) {
            encoder_rows.push_back(reshape(state.h, {in.batch, 1, hidden}));
        }
    }
    Tensor encoder_states;
    if (model.attention) {
        encoder_states = concat(encoder_rows, 1);
    }
    Tensor previous = in.last_observed;
    std::vector<Tensor> outputs;
    outputs.reserve(cfg.n_look_ahead);
    for (std::size_t t = 0; t < cfg.n_look_ahead; ++t) {
        if (t > 0 && teacher_forcing && !in.target_steps.empty() && teacher_forcing(t)) {
            previous = in.target_steps[t - 1];
        }
        const Tensor x = concat({previous, detail::calendar_embedding(model, in.calendar[t])}, 1);
        state = lstm_cell_step(model.decoder, x, state);
        const Tensor features = model.attention ? luong_attention_batch(*model.attention, state.h, encoder_states).h_tilde : state.h;
        Tensor y = dense_forward(model.head, features);
        outputs.push_back(y);
        previous = std::move(y);
    }
    return concat(outputs, 1);
}

/// Denormalized, non-negative forecasts for each window.
inline std::vector<std::vector<double>> forecast_batch(const Seq2SeqModel& model, std::span<const SupervisedWindow> windows,
                                                      std::size_t chunk = 256) {
    std::vector<std::vector<double>> out;
    out.reserve(windows.size());
    Tape::Paused no_recording;
    for (std::size_t start = 0; start < windows.size(); start += chunk) {
        const std::size_t end = std::min(windows.size(), start + chunk);
        std::vector<const SupervisedWindow*> ptrs;
        for (std::size_t i = start; i < end; ++i) {
            detail::check_window(model.config, windows[i], false);
            ptrs.push_back(&windows[i]);
        }
        const auto inputs = detail::make_batch_inputs(model, ptrs, false);
        const Tensor pred = decode_batch(model, inputs);
        const std::size_t tau = model.config.n_look_ahead;
        for (std::size_t b = 0; b < ptrs.size(); ++b) {
            std::vector<double> row(tau);
            for (std::size_t t = 0; t < tau; ++t) {
                row[t] = std::max(0.0, model.scaler.demand.inverse(pred[b * tau + t]));
            }
            out.push_back(std::move(row));
        }
    }
    return out;
}

inline std::vector<double> forecast(const Seq2SeqModel& model, const SupervisedWindow& window) {
    return forecast_batch(model, std::span<const SupervisedWindow>(&window, 1)).front();
}

// ---------------------------------------------------------------------------
// Optimization

class Adam {
public:
    Adam(std::vector<Tensor> params, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
        : params_(std::move(params)), lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {
        for (const Tensor& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            Tensor& p = params_[k];
            if (!p.has_grad()) continue;
            auto w = p.mutable_data();
            const auto g = p.grad();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
                w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
            }
        }
    }

    void zero_grad() {
        for (Tensor& p : params_) p.zero_grad();
    }

private:
    std::vector<Tensor> params_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`; returns the pre-clip norm.
inline double clip_grad_norm(std::span<Tensor> params, double max_norm) {
    double sq = 0.0;
    for (const Tensor& p : params) {
        for (double g : p.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && std::isfinite(norm)) {
        const double factor = max_norm / norm;
        for (Tensor& p : params) {
            for (double& g : p.mutable_grad()) g *= factor;
        }
    }
    return norm;
}

/// Called after every epoch with (1-based epoch, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

/// Mini-batch Adam on normalized MSE; returns the mean loss of every epoch.
inline std::vector<double> train(Seq2SeqModel& model, const std::vector<SupervisedWindow>& windows, const TrainingConfig& cfg,
                                 const EpochCallback& on_epoch = {}) {
    cfg.validate();
    if (windows.empty()) {
        throw ContractError("train: empty training set");
    }
    for (const auto& w : windows) detail::check_window(model.config, w, true);

    std::vector<Tensor> params = model.parameters();
    Adam optimizer(params, cfg.learning_rate);
    Pcg32 order_rng(mix_seed(cfg.seed, 0x0d3e), 1);
    Pcg32 forcing_rng(mix_seed(cfg.seed, 0x7f0c), 2);
    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const TeacherForcing forcing = [&](std::size_t) { return forcing_rng.bernoulli(cfg.teacher_forcing_ratio); };

    std::vector<double> history;
    history.reserve(cfg.epochs);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle(std::span<std::size_t>(order), order_rng);
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const SupervisedWindow*> batch;
            batch.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) batch.push_back(&windows[order[i]]);
            const auto inputs = detail::make_batch_inputs(model, batch, true);

            optimizer.zero_grad();
            Tape tape;
            Tensor loss;
            try {
                auto recording = tape.record();
                loss = mse_loss(decode_batch(model, inputs, forcing), inputs.targets);
            } catch (const NumericError& e) {
                throw DivergenceError(epoch, e.what());
            }
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw DivergenceError(epoch, "training loss is not finite");
            }
            tape.backward(loss);
            clip_grad_norm(params, cfg.clip_norm);
            optimizer.step();
            total += value * static_cast<double>(batch.size());
        }
        history.push_back(total / static_cast<double>(order.size()));
        if (on_epoch) on_epoch(epoch, history.back());
    }
    return history;
}

// ---------------------------------------------------------------------------
// Persistence

inline ModelFile to_model_file(const Seq2SeqModel& model) {
    ModelFile file;
    file.kind = model.kind();
    file.config = model.config;
    file.scaler = scaler_to_json(model.scaler);
    for (const auto& [name, t] : model.named_parameters()) file.add(name, t);
    return file;
}

inline Seq2SeqModel seq2seq_from_model_file(const ModelFile& file) {
    if (file.kind != "seq2seq" && file.kind != "seq2seq_attention") {
        throw FormatError("model file holds a '" + file.kind + "' model, not a seq2seq model");
    }
    ModelConfig config;
    Scaler scaler;
    try {
        config = file.config.get<ModelConfig>();
        scaler = scaler_from_json(file.scaler);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed seq2seq config: ") + e.what());
    }
    if (config.use_attention != (file.kind == "seq2seq_attention")) {
        throw FormatError("model kind disagrees with its use_attention flag");
    }
    Seq2SeqModel model = Seq2SeqModel::create(config, scaler, 0);
    for (auto& [name, t] : model.named_parameters()) {
        Tensor target = t;
        file.load_into(name, target);
    }
    return model;
}

inline void save_model(const Seq2SeqModel& model, const std::filesystem::path& path) { write_model_file(path, to_model_file(model)); }

inline Seq2SeqModel load_model(const std::filesystem::path& path) { return seq2seq_from_model_file(read_model_file(path)); }

} // namespace flightcast
