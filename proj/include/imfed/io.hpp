#pragma once

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "imfed/bank.hpp"
#include "imfed/classifier.hpp"
#include "imfed/data.hpp"
#include "imfed/federation.hpp"
#include "imfed/metrics.hpp"

namespace imfed {

using json = nlohmann::json;

// --- model checkpoints ------------------------------------------------------

inline json to_json(const ModelConfig& c) {
  return {{"input_dim", c.input_dim},
          {"num_classes", c.num_classes},
          {"hidden_dim", c.hidden_dim},
          {"l2_penalty", c.l2_penalty}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.hidden_dim = j.value("hidden_dim", std::size_t{0});
  c.l2_penalty = j.value("l2_penalty", 1e-4);
  return c;
}

inline json to_json(const ModelParams& p) {
  json shapes = json::array();
  for (const auto& s : p.shapes)
    shapes.push_back({{"rows", s.rows}, {"cols", s.cols}, {"weight", s.is_weight}});
  return {{"config", to_json(p.config)}, {"shapes", shapes}, {"flat", p.flat}};
}

inline ModelParams model_params_from_json(const json& j) {
  try {
    ModelParams p = ModelParams::zeros(model_config_from_json(j.at("config")));
    auto flat = j.at("flat").get<Vector>();
    require(flat.size() == p.flat.size(), ErrorKind::invalid_input,
            "checkpoint has " + std::to_string(flat.size()) + " parameters, config implies " +
                std::to_string(p.flat.size()));
    if (j.contains("shapes")) {
      std::vector<LayerShape> shapes;
      for (const auto& s : j.at("shapes"))
        shapes.push_back({s.at("rows").get<std::size_t>(), s.at("cols").get<std::size_t>(),
                          s.at("weight").get<bool>()});
      require(shapes == p.shapes, ErrorKind::invalid_input, "checkpoint shapes disagree with config");
    }
    p.flat = std::move(flat);
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::invalid_input, std::string("malformed checkpoint: ") + e.what());
  }
}

// --- metrics and round logs -------------------------------------------------

inline json to_json(const MetricReport& r) {
  return {{"auc", r.auc},
          {"accuracy", r.accuracy},
          {"specificity", r.specificity},
          {"sensitivity", r.sensitivity},
          {"f1", r.f1},
          {"support", r.support}};
}

inline MetricReport metric_report_from_json(const json& j) {
  MetricReport r;
  r.auc = j.at("auc").get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.specificity = j.at("specificity").get<double>();
  r.sensitivity = j.at("sensitivity").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.support = j.value("support", std::vector<std::size_t>{});
  return r;
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json to_json(const RoundLog& log) {
  json clients = json::array();
  for (const auto& c : log.clients)
    clients.push_back({{"client", c.client_id},
                       {"trained", c.trained},
                       {"bank_size", c.bank_size},
                       {"coverage", c.coverage},
                       {"local_loss", optional_json(c.local_loss)},
                       {"prior_error", optional_json(c.prior_error)},
                       {"degenerate_prior", c.degenerate_prior}});
  return {{"round", log.round},
          {"validation", to_json(log.validation)},
          {"test", log.test ? to_json(*log.test) : json(nullptr)},
          {"server_loss", log.server_loss},
          {"mean_coverage", log.mean_coverage},
          {"mean_prior_error", optional_json(log.mean_prior_error)},
          {"clients", clients}};
}

inline void write_rounds_jsonl(std::ostream& out, const std::vector<RoundLog>& logs) {
  for (const auto& log : logs) out << to_json(log).dump() << '\n';
}

namespace detail {
inline std::string csv_number(double v) {
  // Shortest representation that round-trips, same as the JSON writer.
  return json(v).dump();
}
}  // namespace detail

/// Long-format CSV: round,split,metric,value.
inline void write_rounds_csv(std::ostream& out, const std::vector<RoundLog>& logs) {
  out << "round,split,metric,value\n";
  auto row = [&](std::size_t round, const std::string& split, const std::string& metric, double v) {
    out << round << ',' << split << ',' << metric << ',' << detail::csv_number(v) << '\n';
  };
  auto report = [&](std::size_t round, const std::string& split, const MetricReport& r) {
    row(round, split, "auc", r.auc);
    row(round, split, "accuracy", r.accuracy);
    row(round, split, "specificity", r.specificity);
    row(round, split, "sensitivity", r.sensitivity);
    row(round, split, "f1", r.f1);
  };
  for (const auto& log : logs) {
    report(log.round, "validation", log.validation);
    if (log.test) report(log.round, "test", *log.test);
    row(log.round, "server", "loss", log.server_loss);
    row(log.round, "clients", "mean_coverage", log.mean_coverage);
    if (log.mean_prior_error) row(log.round, "clients", "mean_prior_error", *log.mean_prior_error);
    for (const auto& c : log.clients) {
      const std::string split = "client" + std::to_string(c.client_id);
      row(log.round, split, "coverage", c.coverage);
      row(log.round, split, "bank_size", static_cast<double>(c.bank_size));
      if (c.local_loss) row(log.round, split, "local_loss", *c.local_loss);
      if (c.prior_error) row(log.round, split, "prior_error", *c.prior_error);
    }
  }
}

// --- banks and partitions ---------------------------------------------------

inline json bank_snapshot(const DynamicBank& bank, std::size_t client_id) {
  json ids = json::array(), conf = json::array(), labels = json::array(), subs = json::array();
  for (const auto& [id, e] : bank.entries) {
    ids.push_back(id);
    conf.push_back(e.confidence);
    labels.push_back(e.pseudo_label);
    subs.push_back(e.sub_bank ? json(*e.sub_bank) : json(nullptr));
  }
  return {{"client", client_id}, {"round", bank.round},     {"tau_alpha", bank.tau_alpha},
          {"tau_beta", bank.tau_beta}, {"ids", ids},         {"confidences", conf},
          {"pseudo_labels", labels},   {"sub_banks", subs}};
}

inline json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r)
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

inline json partition_manifest(const FederationData& data) {
  json clients = json::array();
  for (std::size_t c = 0; c < data.clients.size(); ++c)
    clients.push_back({{"client", c}, {"ids", data.clients[c].ids()}});
  return {{"num_classes", data.num_classes()},
          {"server_ids", data.server_labeled.ids},
          {"validation_ids", data.validation.ids},
          {"test_ids", data.test.ids},
          {"clients", clients},
          {"true_client_priors", matrix_json(data.true_client_priors)},
          {"class_allocation", matrix_json(data.class_allocation)}};
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::invalid_input, "cannot write '" + path + "'");
  out << text;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::config_error, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::config_error, "'" + path + "': " + e.what());
  }
}

}  // namespace imfed
