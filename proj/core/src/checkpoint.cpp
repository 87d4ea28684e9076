#include <algorithm>

#include <json.hpp>

#include "layoutgen/errors.hpp"
#include "layoutgen/io.hpp"
#include "layoutgen/model.hpp"

namespace layoutgen {

using nlohmann::ordered_json;
using num::Tensor;

namespace {

ordered_json tensor_to_json(const Tensor& t) {
  ordered_json j;
  j["shape"] = t.shape();
  j["data_b64"] = doubles_to_b64(t.raw());
  return j;
}

Tensor tensor_from_json(const ordered_json& j, const std::string& name) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data_b64"))
    throw InvalidInputError("checkpoint: parameter \"" + name + "\" is malformed");
  std::vector<std::size_t> shape = j["shape"].get<std::vector<std::size_t>>();
  std::vector<double> data = b64_to_doubles(j["data_b64"].get<std::string>());
  std::size_t expect = shape.empty() ? 0 : 1;
  for (std::size_t e : shape) expect *= e;
  if (data.size() != expect)
    throw InvalidInputError("checkpoint: parameter \"" + name + "\" shape mismatch: payload has " +
                            std::to_string(data.size()) + " values for shape product " +
                            std::to_string(expect));
  return Tensor(std::move(shape), std::move(data));
}

void load_into_store(const ordered_json& params, num::ParamStore& store,
                     std::vector<std::string>& consumed) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& name = store.name(i);
    if (!params.contains(name))
      throw InvalidInputError("checkpoint: missing parameter \"" + name + "\"");
    Tensor t = tensor_from_json(params[name], name);
    if (!t.same_shape(store.value(i)))
      throw InvalidInputError("checkpoint: parameter \"" + name + "\" has shape " + t.shape_str() +
                              ", expected " + store.value(i).shape_str());
    store.value(i) = std::move(t);
    consumed.push_back(name);
  }
}

void load_moments(const ordered_json& params, const num::ParamStore& store, num::AdamState& opt,
                  std::vector<std::string>& consumed) {
  for (std::size_t i = 0; i < store.size(); ++i) {
    for (const char* kind : {"opt.m.", "opt.v."}) {
      const std::string name = kind + store.name(i);
      if (!params.contains(name))
        throw InvalidInputError("checkpoint: missing optimizer entry \"" + name + "\"");
      Tensor t = tensor_from_json(params[name], name);
      if (!t.same_shape(store.value(i)))
        throw InvalidInputError("checkpoint: optimizer entry \"" + name + "\" shape mismatch");
      (kind[4] == 'm' ? opt.m[i] : opt.v[i]) = std::move(t);
      consumed.push_back(name);
    }
  }
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw InvalidInputError("checkpoint: " + what + " is not a valid u64 decimal string");
  }
}

}  // namespace

std::string checkpoint_to_text(const ModelState& st) {
  ordered_json j;
  j["version"] = kCheckpointVersion;
  j["training_config"] = ordered_json{{"beta", st.cfg.beta},
                                      {"lambda", st.cfg.lambda},
                                      {"gamma", st.cfg.gamma},
                                      {"gen_objective", std::string(to_string(st.cfg.gen_objective))},
                                      {"d_hidden", st.cfg.d_hidden},
                                      {"d_latent", st.cfg.d_latent},
                                      {"layers", st.cfg.layers},
                                      {"n_max", st.cfg.n_max},
                                      {"epochs", st.cfg.epochs},
                                      {"batch_size", st.cfg.batch_size},
                                      {"lr", st.cfg.lr},
                                      {"seed", st.cfg.seed}};
  j["graph_config"] = ordered_json{{"tau_align", st.graph_cfg.tau_align},
                                   {"tau_prox", st.graph_cfg.tau_prox},
                                   {"k_nn", st.graph_cfg.k_nn},
                                   {"tau_cap", st.graph_cfg.tau_cap},
                                   {"self_loop", st.graph_cfg.self_loop}};

  ordered_json params = ordered_json::object();
  for (std::size_t i = 0; i < st.gen.size(); ++i)
    params[st.gen.name(i)] = tensor_to_json(st.gen.value(i));
  for (std::size_t i = 0; i < st.disc.size(); ++i)
    params[st.disc.name(i)] = tensor_to_json(st.disc.value(i));
  // Optimizer state rides along under reserved opt.* names so that resumed
  // training is bit-exact.
  params["opt.t.gen"] = tensor_to_json(Tensor::row_vector({static_cast<double>(st.opt_gen.t)}));
  params["opt.t.disc"] = tensor_to_json(Tensor::row_vector({static_cast<double>(st.opt_disc.t)}));
  for (std::size_t i = 0; i < st.gen.size(); ++i) {
    params["opt.m." + st.gen.name(i)] = tensor_to_json(st.opt_gen.m[i]);
    params["opt.v." + st.gen.name(i)] = tensor_to_json(st.opt_gen.v[i]);
  }
  for (std::size_t i = 0; i < st.disc.size(); ++i) {
    params["opt.m." + st.disc.name(i)] = tensor_to_json(st.opt_disc.m[i]);
    params["opt.v." + st.disc.name(i)] = tensor_to_json(st.opt_disc.v[i]);
  }
  j["params"] = std::move(params);
  j["rng_state"] = std::to_string(st.rng.state());
  j["loss_trace"] = st.loss_trace;
  return j.dump();
}

namespace {
ModelState checkpoint_from_json(const ordered_json& j);
}  // namespace

ModelState checkpoint_from_text(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInputError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  try {
    return checkpoint_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("checkpoint: malformed content: ") + e.what());
  }
}

namespace {
ModelState checkpoint_from_json(const ordered_json& j) {
  if (!j.is_object()) throw InvalidInputError("checkpoint: not a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (key != "version" && key != "training_config" && key != "graph_config" && key != "params" &&
        key != "rng_state" && key != "loss_trace")
      throw InvalidInputError("checkpoint: unknown key \"" + key + "\"");
  }
  if (!j.contains("version") || !j["version"].is_number_integer())
    throw InvalidInputError("checkpoint: missing version");
  if (j["version"].get<int>() != kCheckpointVersion)
    throw InvalidInputError("checkpoint: version mismatch: file has " +
                            std::to_string(j["version"].get<int>()) + ", expected " +
                            std::to_string(kCheckpointVersion));

  TrainingConfig cfg;
  {
    const auto& tc = j.at("training_config");
    cfg.beta = tc.at("beta").get<double>();
    cfg.lambda = tc.at("lambda").get<double>();
    cfg.gamma = tc.at("gamma").get<double>();
    const auto obj = parse_gen_objective(tc.at("gen_objective").get<std::string>());
    if (!obj) throw InvalidInputError("checkpoint: unknown gen_objective");
    cfg.gen_objective = *obj;
    cfg.d_hidden = tc.at("d_hidden").get<int>();
    cfg.d_latent = tc.at("d_latent").get<int>();
    cfg.layers = tc.at("layers").get<int>();
    cfg.n_max = tc.at("n_max").get<int>();
    cfg.epochs = tc.at("epochs").get<int>();
    cfg.batch_size = tc.at("batch_size").get<int>();
    cfg.lr = tc.at("lr").get<double>();
    cfg.seed = tc.at("seed").get<std::uint64_t>();
  }
  GraphConfig gc;
  {
    const auto& g = j.at("graph_config");
    gc.tau_align = g.at("tau_align").get<double>();
    gc.tau_prox = g.at("tau_prox").get<double>();
    gc.k_nn = g.at("k_nn").get<int>();
    gc.tau_cap = g.at("tau_cap").get<double>();
    gc.self_loop = g.at("self_loop").get<bool>();
  }

  ModelState st = init_model(cfg, gc);
  const auto& params = j.at("params");
  if (!params.is_object()) throw InvalidInputError("checkpoint: params is not an object");
  std::vector<std::string> consumed;
  load_into_store(params, st.gen, consumed);
  load_into_store(params, st.disc, consumed);
  st.opt_gen.lr = cfg.lr;
  st.opt_disc.lr = cfg.lr;
  if (!params.contains("opt.t.gen") || !params.contains("opt.t.disc"))
    throw InvalidInputError("checkpoint: missing optimizer step counters");
  st.opt_gen.t =
      static_cast<std::uint64_t>(tensor_from_json(params["opt.t.gen"], "opt.t.gen").at(0));
  st.opt_disc.t =
      static_cast<std::uint64_t>(tensor_from_json(params["opt.t.disc"], "opt.t.disc").at(0));
  consumed.push_back("opt.t.gen");
  consumed.push_back("opt.t.disc");
  load_moments(params, st.gen, st.opt_gen, consumed);
  load_moments(params, st.disc, st.opt_disc, consumed);
  if (consumed.size() != params.size()) {
    for (const auto& [key, _] : params.items())
      if (std::find(consumed.begin(), consumed.end(), key) == consumed.end())
        throw InvalidInputError("checkpoint: unexpected parameter \"" + key + "\"");
  }

  st.rng.set_state(parse_u64(j.at("rng_state").get<std::string>(), "rng_state"));
  st.loss_trace = j.at("loss_trace").get<std::vector<double>>();
  return st;
}
}  // namespace

void save_checkpoint(const ModelState& st, const std::string& path) {
  atomic_write_file(path, checkpoint_to_text(st));
}

ModelState load_checkpoint(const std::string& path) {
  return checkpoint_from_text(read_file(path));
}

}  // namespace layoutgen
