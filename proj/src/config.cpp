#include "mamorl/config.hpp"

#include "mamorl/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mamorl::harness {

namespace {

// Raised by value parsers; converted to ParseError once the line is known.
struct ValueError {
    std::string message;
};

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(trim(item));
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
}

template <typename T>
T parse_number(const std::string& s) {
    T value{};
    const char* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (s.empty() || ec != std::errc() || ptr != end) {
        throw ValueError{"expected a number, got '" + s + "'"};
    }
    if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(value)) throw ValueError{"value must be finite"};
    }
    return value;
}

bool parse_bool(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw ValueError{"expected true or false, got '" + s + "'"};
}

template <typename T>
std::string format_number(T value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, ptr);
}

struct Field {
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

using Section = std::map<std::string, Field>;

struct Bounds {
    double lo = -INFINITY;
    double hi = INFINITY;
    bool lo_open = false;
    bool hi_open = false;
};

void check_bounds(double v, const Bounds& b) {
    const bool below = b.lo_open ? !(v > b.lo) : !(v >= b.lo);
    const bool above = b.hi_open ? !(v < b.hi) : !(v <= b.hi);
    if (below || above) {
        throw ValueError{"value " + format_number(v) + " outside " + (b.lo_open ? "(" : "[") +
                         format_number(b.lo) + ", " + format_number(b.hi) +
                         (b.hi_open ? ")" : "]")};
    }
}

template <typename T>
Field number(T& ref, Bounds b = {}) {
    return {[&ref, b](const std::string& s) {
                const T v = parse_number<T>(s);
                check_bounds(static_cast<double>(v), b);
                ref = v;
            },
            [&ref] { return format_number(ref); }};
}

Field boolean(bool& ref) {
    return {[&ref](const std::string& s) { ref = parse_bool(s); },
            [&ref] { return std::string(ref ? "true" : "false"); }};
}

Bounds at_least(double lo) { return {lo, INFINITY, false, false}; }
Bounds above(double lo) { return {lo, INFINITY, true, false}; }

std::map<std::string, Section> fields(ExperimentConfig& c) {
    std::map<std::string, Section> out;

    Section& env = out["env"];
    env["kind"] = {[&c](const std::string& s) {
                       try {
                           c.env.kind = env::env_kind_from_string(s);
                       } catch (const ConfigError& e) {
                           throw ValueError{e.what()};
                       }
                   },
                   [&c] { return env::to_string(c.env.kind); }};
    env["n_agents"] = number(c.env.n_agents, at_least(1));
    env["n_landmarks"] = number(c.env.n_landmarks, at_least(1));
    env["n_adversaries"] = number(c.env.n_adversaries, at_least(0));
    env["world_size"] = number(c.env.world_size, above(0));
    env["dt"] = number(c.env.dt, above(0));
    env["max_steps"] = number(c.env.max_steps, at_least(1));
    env["energy_move_coeff"] = number(c.env.energy_move_coeff, at_least(0));
    env["adversary_accel"] = number(c.env.adversary_accel, above(0));
    env["seed"] = number(c.env.seed);

    Section& train = out["train"];
    train["gamma"] = number(c.train.gamma, {0.0, 1.0});
    train["tau"] = number(c.train.tau, {0.0, 1.0, true, false});
    train["batch"] = number(c.train.batch, at_least(1));
    train["buffer_capacity"] = number(c.train.buffer_capacity, at_least(1));
    train["actor_lr"] = number(c.train.actor_lr, above(0));
    train["critic_lr"] = number(c.train.critic_lr, above(0));
    train["gpi_candidates"] = number(c.train.gpi_candidates, at_least(0));
    train["noise_sigma_start"] = number(c.train.noise_sigma_start, at_least(0));
    train["noise_sigma_end"] = number(c.train.noise_sigma_end, at_least(0));
    train["noise_decay_steps"] = number(c.train.noise_decay_steps, at_least(0));
    train["update_every"] = number(c.train.update_every, at_least(1));
    train["warmup_steps"] = number(c.train.warmup_steps, at_least(0));
    train["episodes"] = number(c.train.episodes, at_least(1));
    train["embed_relu"] = boolean(c.train.embed_relu);
    train["critic_width"] = number(c.train.critic_width, at_least(1));
    train["checkpoint_every"] = number(c.train.checkpoint_every, at_least(0));

    Section& pref = out["preference"];
    pref["case"] = {[&c](const std::string& s) {
                        try {
                            c.preference.kind = train::preference_case_from_string(s);
                        } catch (const ConfigError& e) {
                            throw ValueError{e.what()};
                        }
                    },
                    [&c] { return train::to_string(c.preference.kind); }};
    pref["generator_seed"] = number(c.preference.generator_seed);
    pref["scale"] = number(c.preference.scale, above(0));

    Section& eval = out["eval"];
    eval["n_states"] = number(c.eval.n_states, at_least(1));
    eval["grid_divisions"] = number(c.eval.grid_divisions, at_least(0));
    eval["episodes_per_point"] = number(c.eval.episodes_per_point, at_least(1));
    eval["seed"] = number(c.eval.seed);

    Section& exp = out["experiment"];
    exp["variants"] = {[&c](const std::string& s) {
                           std::vector<train::Algorithm> vs;
                           for (const auto& item : split_list(s)) {
                               train::Algorithm a;
                               try {
                                   a = train::algorithm_from_string(item);
                               } catch (const ConfigError& e) {
                                   throw ValueError{e.what()};
                               }
                               if (std::find(vs.begin(), vs.end(), a) != vs.end()) {
                                   throw ValueError{"duplicate variant '" + item + "'"};
                               }
                               vs.push_back(a);
                           }
                           if (vs.empty()) throw ValueError{"at least one variant is required"};
                           c.variants = vs;
                       },
                       [&c] {
                           std::string s;
                           for (const auto v : c.variants) s += (s.empty() ? "" : ", ") + train::to_string(v);
                           return s;
                       }};
    exp["seeds"] = {[&c](const std::string& s) {
                        std::vector<std::uint64_t> seeds;
                        for (const auto& item : split_list(s)) {
                            seeds.push_back(parse_number<std::uint64_t>(item));
                        }
                        if (seeds.empty()) throw ValueError{"at least one seed is required"};
                        c.seeds = seeds;
                    },
                    [&c] {
                        std::string s;
                        for (const auto v : c.seeds) s += (s.empty() ? "" : ", ") + format_number(v);
                        return s;
                    }};
    exp["output_dir"] = {[&c](const std::string& s) {
                             if (s.empty()) throw ValueError{"output_dir must not be empty"};
                             c.output_dir = s;
                         },
                         [&c] { return c.output_dir; }};
    return out;
}

void check_cases(const ExperimentConfig& c) {
    for (const auto v : c.variants) {
        if (train::required_case(v) != c.preference.kind) {
            throw ConfigError("variant " + train::to_string(v) + " requires preference case " +
                              train::to_string(train::required_case(v)) + ", got " +
                              train::to_string(c.preference.kind));
        }
    }
}

const char* const kSectionOrder[] = {"experiment", "env", "train", "preference", "eval"};

}  // namespace

void ExperimentConfig::validate() const {
    env.validate();
    train.validate();
    check_cases(*this);
    if (variants.empty()) throw ConfigError("at least one variant is required");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    // Canonical text covers every field.
    return serialize(a) == serialize(b);
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig config;
    auto table = fields(config);
    std::map<std::string, std::size_t> last_line;
    std::map<std::string, std::size_t> seen;
    std::string section = "experiment";

    std::istringstream in(text);
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError(line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!table.count(section)) throw ParseError(line_no, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError(line_no, "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto& sec = table.at(section);
        const auto it = sec.find(key);
        if (it == sec.end()) throw ParseError(line_no, "unknown key '" + key + "' in [" + section + "]");
        const std::string qualified = section + "." + key;
        if (seen.count(qualified)) {
            throw ParseError(line_no, "duplicate key '" + key + "' (first set on line " +
                                          std::to_string(seen[qualified]) + ")");
        }
        seen[qualified] = line_no;
        try {
            it->second.set(value);
        } catch (const ValueError& e) {
            throw ParseError(line_no, key + ": " + e.message);
        }
        last_line[section] = line_no;
    }

    const auto line_of = [&](std::initializer_list<const char*> sections) {
        std::size_t at = 0;
        for (const char* s : sections) {
            if (last_line.count(s)) at = std::max(at, last_line[s]);
        }
        return at == 0 ? std::max<std::size_t>(line_no, 1) : at;
    };
    try {
        config.env.validate();
    } catch (const ConfigError& e) {
        throw ParseError(line_of({"env"}), e.what());
    }
    try {
        config.train.validate();
    } catch (const ConfigError& e) {
        throw ParseError(line_of({"train"}), e.what());
    }
    try {
        check_cases(config);
    } catch (const ConfigError& e) {
        throw ParseError(line_of({"experiment", "preference"}), e.what());
    }
    return config;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize(const ExperimentConfig& config) {
    ExperimentConfig copy = config;
    auto table = fields(copy);
    std::ostringstream out;
    for (const char* name : kSectionOrder) {
        if (std::string(name) != "experiment") out << "\n[" << name << "]\n";
        for (const auto& [key, field] : table.at(name)) out << key << " = " << field.get() << "\n";
    }
    return out.str();
}

}  // namespace mamorl::harness
