#include "twinforge/exec.hpp"

#include <fcntl.h>
#include <poll.h>
#include <sched.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

#include "twinforge/digest.hpp"

namespace twinforge::exec {

std::string_view to_string(RunStatus s) {
    switch (s) {
        case RunStatus::not_run: return "not_run";
        case RunStatus::passed: return "passed";
        case RunStatus::failed: return "failed";
        case RunStatus::timeout: return "timeout";
        case RunStatus::crashed: return "crashed";
    }
    return "";
}

RunStatus parse_run_status(std::string_view s) {
    for (auto v : {RunStatus::not_run, RunStatus::passed, RunStatus::failed, RunStatus::timeout, RunStatus::crashed}) {
        if (to_string(v) == s) return v;
    }
    throw Error("unknown run status: " + std::string(s));
}

CompileResult check_compiles(std::string_view script, const syntax::Grammar& grammar, const CompileOptions& options) {
    CompileResult r;
    const auto parsed = grammar.parse(script);
    if (!parsed.ok()) {
        r.reason = "syntax error";
        r.diagnostic = parsed.error;
        return r;
    }
    if (options.strict) {
        for (const auto& mod : grammar.imports(*parsed.tree)) {
            const bool allowed = std::any_of(options.import_allowlist.begin(), options.import_allowlist.end(),
                                             [&](const std::string& a) {
                                                 return mod == a || (mod.size() > a.size() && mod.starts_with(a) &&
                                                                     mod[a.size()] == '.');
                                             });
            if (!allowed) {
                r.reason = "unknown import";
                r.diagnostic = syntax::Diagnostic{0, 0, "unknown import: " + mod};
                return r;
            }
        }
    }
    r.ok = true;
    return r;
}

RunnerConfig runner_config_from_json(const nlohmann::json& j) {
    RunnerConfig c;
    c.interpreter = j.value("interpreter", c.interpreter);
    c.args = j.value("args", c.args);
    c.script_name = j.value("script_name", c.script_name);
    c.env_allowlist = j.value("env_allowlist", c.env_allowlist);
    c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
    c.network = j.value("network", c.network);
    if (j.contains("stdout_pattern") && !j["stdout_pattern"].is_null()) c.stdout_pattern = j["stdout_pattern"].get<std::string>();
    if (c.timeout_seconds <= 0) throw ConfigError("timeout_seconds must be positive");
    return c;
}

nlohmann::json to_json(const RunnerConfig& c) {
    nlohmann::json j = {{"interpreter", c.interpreter},     {"args", c.args},
                        {"script_name", c.script_name},     {"env_allowlist", c.env_allowlist},
                        {"timeout_seconds", c.timeout_seconds}, {"network", c.network}};
    j["stdout_pattern"] = c.stdout_pattern ? nlohmann::json(*c.stdout_pattern) : nlohmann::json(nullptr);
    return j;
}

std::optional<std::filesystem::path> resolve_interpreter(const std::string& interpreter) {
    auto executable = [](const std::filesystem::path& p) {
        std::error_code ec;
        return std::filesystem::is_regular_file(p, ec) && ::access(p.c_str(), X_OK) == 0;
    };
    if (interpreter.find('/') != std::string::npos) {
        if (executable(interpreter)) return std::filesystem::path(interpreter);
        return std::nullopt;
    }
    const char* path = std::getenv("PATH");
    std::string_view rest = path ? path : "/usr/bin:/bin";
    while (true) {
        const auto colon = rest.find(':');
        const std::string_view dir = rest.substr(0, colon);
        if (!dir.empty()) {
            const auto candidate = std::filesystem::path(dir) / interpreter;
            if (executable(candidate)) return candidate;
        }
        if (colon == std::string_view::npos) break;
        rest.remove_prefix(colon + 1);
    }
    return std::nullopt;
}

namespace {

struct Pipe {
    int fd[2] = {-1, -1};
    Pipe() {
        if (::pipe2(fd, O_CLOEXEC) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));
    }
    ~Pipe() { close_all(); }
    void close_end(int i) {
        if (fd[i] >= 0) ::close(fd[i]);
        fd[i] = -1;
    }
    void close_all() {
        close_end(0);
        close_end(1);
    }
};

std::filesystem::path make_workdir(const std::filesystem::path& root) {
    const auto base = root.empty() ? std::filesystem::temp_directory_path() : root;
    std::filesystem::create_directories(base);
    std::string tmpl = (base / "twinforge-run-XXXXXX").string();
    if (::mkdtemp(tmpl.data()) == nullptr) throw IoError("mkdtemp failed under " + base.string());
    return tmpl;
}

// Everything the child needs, prepared before fork so the child only makes
// async-signal-safe calls.
struct ChildPlan {
    std::vector<std::string> argv_s;
    std::vector<std::string> env_s;
    std::vector<char*> argv;
    std::vector<char*> envp;
    std::string workdir;
    bool isolate_network = true;
};

[[noreturn]] void run_child(const ChildPlan& plan, int out_fd, int err_fd, int status_fd) {
    ::setpgid(0, 0);
    const int devnull = ::open("/dev/null", O_RDONLY);
    if (devnull >= 0) ::dup2(devnull, 0);
    ::dup2(out_fd, 1);
    ::dup2(err_fd, 2);
    char flag = 'n';
    if (plan.isolate_network && ::unshare(CLONE_NEWNET) == 0) flag = 'N';
    (void)!::write(status_fd, &flag, 1);
    if (::chdir(plan.workdir.c_str()) != 0) _exit(126);
    ::execve(plan.argv[0], plan.argv.data(), plan.envp.data());
    const int e = errno;
    (void)!::write(status_fd, &e, sizeof e);
    _exit(127);
}

}  // namespace

RunOutcome run_sandboxed(std::string_view script, const RunnerConfig& config) {
    const auto interp = resolve_interpreter(config.interpreter);
    if (!interp) throw ConfigError("runner interpreter not found: " + config.interpreter);
    if (config.timeout_seconds <= 0) throw ConfigError("timeout_seconds must be positive");

    RunOutcome out;
    out.compile_ok = true;
    const auto workdir = make_workdir(config.work_root);
    write_file_atomic(workdir / config.script_name, script);

    ChildPlan plan;
    plan.workdir = workdir.string();
    plan.isolate_network = !config.network;
    plan.argv_s.push_back(interp->string());
    for (const auto& a : config.args) plan.argv_s.push_back(a);
    plan.argv_s.push_back(config.script_name);
    for (const auto& name : config.env_allowlist) {
        if (name == "HOME" || name == "TMPDIR") continue;
        if (const char* v = std::getenv(name.c_str())) plan.env_s.push_back(name + "=" + v);
    }
    plan.env_s.push_back("HOME=" + plan.workdir);
    plan.env_s.push_back("TMPDIR=" + plan.workdir);
    for (auto& s : plan.argv_s) plan.argv.push_back(s.data());
    plan.argv.push_back(nullptr);
    for (auto& s : plan.env_s) plan.envp.push_back(s.data());
    plan.envp.push_back(nullptr);

    Pipe out_pipe, err_pipe, status_pipe;
    const auto start = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) throw Error(std::string("fork: ") + std::strerror(errno));
    if (pid == 0) run_child(plan, out_pipe.fd[1], err_pipe.fd[1], status_pipe.fd[1]);
    ::setpgid(pid, pid);
    out_pipe.close_end(1);
    err_pipe.close_end(1);
    status_pipe.close_end(1);

    std::string stdout_buf, stderr_buf;
    const auto deadline = start + std::chrono::duration<double>(config.timeout_seconds);
    bool timed_out = false;
    std::vector<pollfd> fds = {{out_pipe.fd[0], POLLIN, 0}, {err_pipe.fd[0], POLLIN, 0}};
    char buf[4096];
    while (fds[0].fd >= 0 || fds[1].fd >= 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            timed_out = true;
            break;
        }
        const int ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
        const int rc = ::poll(fds.data(), fds.size(), std::min(ms, 100));
        if (rc < 0 && errno != EINTR) break;
        for (std::size_t i = 0; i < fds.size(); ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const ssize_t n = ::read(fds[i].fd, buf, sizeof buf);
            if (n <= 0) {
                fds[i].fd = -1;
                continue;
            }
            std::string& target = i == 0 ? stdout_buf : stderr_buf;
            if (target.size() < (1u << 20)) target.append(buf, static_cast<std::size_t>(n));
        }
    }
    int status = 0;
    if (!timed_out) {
        // Pipes closed; the child may still be running if it closed them itself.
        while (true) {
            const pid_t w = ::waitpid(pid, &status, WNOHANG);
            if (w == pid) break;
            if (std::chrono::steady_clock::now() >= deadline) {
                timed_out = true;
                break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
    }
    if (timed_out) {
        ::kill(-pid, SIGKILL);
        ::kill(pid, SIGKILL);
        ::waitpid(pid, &status, 0);
    }
    // Reap any grandchildren left in the process group.
    ::kill(-pid, SIGKILL);
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    char flag = 0;
    if (::read(status_pipe.fd[0], &flag, 1) == 1) out.network_isolated = flag == 'N';
    int exec_errno = 0;
    const bool exec_failed = ::read(status_pipe.fd[0], &exec_errno, sizeof exec_errno) == sizeof exec_errno;

    out.stderr_excerpt = stderr_buf.size() > config.stderr_limit
                             ? stderr_buf.substr(stderr_buf.size() - config.stderr_limit)
                             : stderr_buf;
    if (exec_failed) {
        out.run_status = RunStatus::crashed;
        out.reason = std::string("exec failed: ") + std::strerror(exec_errno);
    } else if (timed_out) {
        out.run_status = RunStatus::timeout;
        out.reason = "timeout";
    } else if (WIFSIGNALED(status)) {
        out.signal = WTERMSIG(status);
        out.run_status = RunStatus::crashed;
        out.reason = "signal " + std::to_string(*out.signal);
    } else {
        out.exit_code = WEXITSTATUS(status);
        if (*out.exit_code != 0) {
            out.run_status = RunStatus::failed;
            out.reason = "exit status " + std::to_string(*out.exit_code);
        } else if (config.stdout_pattern && !std::regex_search(stdout_buf, std::regex(*config.stdout_pattern))) {
            out.run_status = RunStatus::failed;
            out.reason = "stdout pattern not matched";
        } else {
            out.run_status = RunStatus::passed;
        }
    }
    if (!config.keep_workdir) {
        std::error_code ec;
        std::filesystem::remove_all(workdir, ec);
    }
    return out;
}

double estimate_at_k(SampleBatch batch, int k) {
    const int n = batch.n, c = batch.c;
    if (n < 1) throw Error("estimate_at_k: n must be at least 1");
    if (c < 0 || c > n) throw Error("estimate_at_k: c must lie in [0, n]");
    if (k < 1 || k > n) throw Error("estimate_at_k: k must lie in [1, n]");
    if (n - c < k) return 1.0;
    double all_fail = 1.0;
    for (int i = 0; i < k; ++i) all_fail *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    return 1.0 - all_fail;
}

std::vector<TaskOutcome> evaluate_tasks(const std::vector<Task>& tasks, const syntax::Grammar& grammar,
                                        const EvalOptions& options) {
    std::vector<TaskOutcome> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                TaskOutcome& r = results[i];
                r.task_id = tasks[i].id;
                const auto cr = check_compiles(tasks[i].script, grammar, options.compile);
                if (!cr.ok) {
                    r.outcome.compile_ok = false;
                    r.outcome.reason = cr.reason;
                    r.outcome.diagnostic = cr.diagnostic;
                } else if (options.compile_only) {
                    r.outcome.compile_ok = true;
                } else {
                    r.outcome = run_sandboxed(tasks[i].script, options.runner);
                }
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
                next = tasks.size();
            }
        }
    };
    const std::size_t width = std::max<std::size_t>(1, std::min(options.workers, tasks.size()));
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < width; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    std::stable_sort(results.begin(), results.end(),
                     [](const TaskOutcome& a, const TaskOutcome& b) { return a.task_id < b.task_id; });
    return results;
}

nlohmann::json to_json(const TaskOutcome& o) {
    const RunOutcome& r = o.outcome;
    nlohmann::json j = {{"task_id", o.task_id},
                        {"compile_ok", r.compile_ok},
                        {"run_status", to_string(r.run_status)},
                        {"wall_time", r.wall_time},
                        {"stderr_excerpt", r.stderr_excerpt},
                        {"network_isolated", r.network_isolated},
                        {"reason", r.reason}};
    j["exit_code"] = r.exit_code ? nlohmann::json(*r.exit_code) : nlohmann::json(nullptr);
    j["signal"] = r.signal ? nlohmann::json(*r.signal) : nlohmann::json(nullptr);
    if (r.diagnostic) {
        j["diagnostic"] = {{"line", r.diagnostic->line}, {"column", r.diagnostic->column},
                           {"message", r.diagnostic->message}};
    } else {
        j["diagnostic"] = nullptr;
    }
    return j;
}

std::string outcomes_jsonl(const std::vector<TaskOutcome>& outcomes) {
    std::string out;
    for (const auto& o : outcomes) out += to_json(o).dump() + "\n";
    return out;
}

std::vector<std::pair<std::string, SampleBatch>> batches_by_task(const std::vector<TaskOutcome>& outcomes,
                                                                 bool count_compile) {
    std::map<std::string, SampleBatch> groups;
    for (const auto& o : outcomes) {
        const auto hash = o.task_id.rfind('#');
        const std::string key = hash == std::string::npos ? o.task_id : o.task_id.substr(0, hash);
        auto [it, inserted] = groups.try_emplace(key, SampleBatch{0, 0});
        ++it->second.n;
        const bool ok = count_compile ? o.outcome.compile_ok : o.outcome.run_status == RunStatus::passed;
        if (ok) ++it->second.c;
    }
    return {groups.begin(), groups.end()};
}

}  // namespace twinforge::exec
