#pragma once

#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace scotkit {

// One verified quantity. `provenance` states how the value was obtained:
// "exact" (closed form or exhaustive tree evaluation), "sampled" (random
// probes of a sound inequality), or "estimated" (solver output with its own
// tolerance). Every row names the tolerance its pass verdict used.
struct CheckRow {
  std::string name;
  double value = 0.0;
  std::optional<double> bound;  // comparison target when one exists
  double tol = 0.0;
  std::string provenance = "exact";
  bool pass = true;
};

// Structured result of one CLI run. Serialization keeps wall_time_ms as the
// final field so byte comparisons can strip it; everything before it is a
// pure function of the inputs and the seed.
struct RunReport {
  std::string command;
  std::string input_digest = "-";
  std::uint64_t seed = 0;
  int thread_cap = 1;
  std::vector<std::pair<std::string, double>> constants;
  std::vector<std::pair<std::string, std::string>> notes;
  std::vector<CheckRow> checks;
  double wall_time_ms = 0.0;

  bool all_pass() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }

  void add_constant(std::string name, double value) {
    constants.emplace_back(std::move(name), value);
  }
  void add_note(std::string name, std::string text) {
    notes.emplace_back(std::move(name), std::move(text));
  }
  CheckRow& add_check(std::string name, double value, std::optional<double> bound,
                      double tol, std::string provenance, bool pass) {
    checks.push_back(CheckRow{std::move(name), value, bound, tol,
                              std::move(provenance), pass});
    return checks.back();
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["command"] = command;
    j["input_digest"] = input_digest;
    j["seed"] = seed;
    j["thread_cap"] = thread_cap;
    nlohmann::ordered_json jc = nlohmann::ordered_json::object();
    for (const auto& [k, v] : constants) jc[k] = v;
    j["constants"] = std::move(jc);
    nlohmann::ordered_json jn = nlohmann::ordered_json::object();
    for (const auto& [k, v] : notes) jn[k] = v;
    j["notes"] = std::move(jn);
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& c : checks) {
      nlohmann::ordered_json r;
      r["name"] = c.name;
      r["value"] = c.value;
      if (c.bound)
        r["bound"] = *c.bound;
      else
        r["bound"] = nullptr;
      r["tol"] = c.tol;
      r["provenance"] = c.provenance;
      r["pass"] = c.pass;
      rows.push_back(std::move(r));
    }
    j["checks"] = std::move(rows);
    j["all_pass"] = all_pass();
    j["wall_time_ms"] = wall_time_ms;
    return j;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "key,value\n";
    os << "command," << command << "\n";
    os << "input_digest," << input_digest << "\n";
    os << "seed," << seed << "\n";
    os << "thread_cap," << thread_cap << "\n";
    for (const auto& [k, v] : constants) os << "constant." << k << "," << v << "\n";
    for (const auto& [k, v] : notes) os << "note." << k << ",\"" << v << "\"\n";
    os << "name,value,bound,tol,provenance,pass\n";
    for (const auto& c : checks) {
      os << c.name << "," << c.value << ",";
      if (c.bound) os << *c.bound;
      os << "," << c.tol << "," << c.provenance << ","
         << (c.pass ? "true" : "false") << "\n";
    }
    os << "all_pass," << (all_pass() ? "true" : "false") << "\n";
    os << "wall_time_ms," << wall_time_ms << "\n";
    return os.str();
  }

  std::string to_table() const {
    std::ostringstream os;
    os << "== " << command << " (seed " << seed << ", digest " << input_digest
       << ") ==\n";
    for (const auto& [k, v] : constants)
      os << "  const " << k << " = " << std::setprecision(12) << v << "\n";
    for (const auto& [k, v] : notes) os << "  note  " << k << ": " << v << "\n";
    if (!checks.empty()) {
      os << "  " << std::left << std::setw(44) << "check" << std::right
         << std::setw(14) << "value" << std::setw(14) << "bound"
         << std::setw(11) << "tol" << std::setw(11) << "provenance"
         << std::setw(7) << "pass" << "\n";
      for (const auto& c : checks) {
        os << "  " << std::left << std::setw(44) << c.name << std::right
           << std::setw(14) << std::setprecision(6) << c.value;
        if (c.bound)
          os << std::setw(14) << std::setprecision(6) << *c.bound;
        else
          os << std::setw(14) << "-";
        os << std::setw(11) << std::setprecision(3) << c.tol << std::setw(11)
           << c.provenance << std::setw(7) << (c.pass ? "ok" : "FAIL") << "\n";
      }
    }
    os << (all_pass() ? "ALL CHECKS PASSED" : "CHECK FAILURES PRESENT") << "\n";
    return os.str();
  }
};

}  // namespace scotkit
