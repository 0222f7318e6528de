#include "rtlforge/subprocess.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <condition_variable>
#include <cstring>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "rtlforge/errors.hpp"

extern char** environ;

namespace rtlforge {

namespace {

std::string read_capped(const std::filesystem::path& path, std::size_t cap) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  std::string data(cap, '\0');
  in.read(data.data(), static_cast<std::streamsize>(cap));
  data.resize(static_cast<std::size_t>(in.gcount()));
  if (in.peek() != std::char_traits<char>::eof()) data += "\n[output truncated]\n";
  return data;
}

std::vector<std::string> build_env(const std::map<std::string, std::string>& extra) {
  std::vector<std::string> env;
  for (char** e = environ; e && *e; ++e) {
    std::string entry(*e);
    auto eq = entry.find('=');
    if (eq != std::string::npos && extra.contains(entry.substr(0, eq))) continue;
    env.push_back(std::move(entry));
  }
  for (const auto& [k, v] : extra) env.push_back(k + "=" + v);
  return env;
}

std::mutex gate_mutex;
std::condition_variable gate_cv;
int gate_limit = std::max(1u, std::thread::hardware_concurrency());
int gate_active = 0;
int gate_peak = 0;

}  // namespace

std::optional<std::filesystem::path> find_on_path(const std::string& name) {
  if (name.find('/') != std::string::npos) {
    if (::access(name.c_str(), X_OK) == 0) return std::filesystem::absolute(name);
    return std::nullopt;
  }
  const char* path = std::getenv("PATH");
  if (!path) return std::nullopt;
  std::stringstream dirs(path);
  std::string dir;
  while (std::getline(dirs, dir, ':')) {
    if (dir.empty()) continue;
    auto candidate = std::filesystem::path(dir) / name;
    if (::access(candidate.c_str(), X_OK) == 0 && !std::filesystem::is_directory(candidate)) return candidate;
  }
  return std::nullopt;
}

ProcessResult run_process(const std::vector<std::string>& argv, const ProcessOptions& options) {
  if (argv.empty()) throw PreconditionError("run_process: empty argv");
  auto exe = find_on_path(argv[0]);
  if (!exe) throw ToolMissing("executable not found: " + argv[0]);

  const auto cwd = options.cwd.empty() ? std::filesystem::current_path() : options.cwd;
  auto resolve = [&](const std::optional<std::filesystem::path>& p, const char* fallback) {
    if (!p) return cwd / fallback;
    return p->is_absolute() ? *p : cwd / *p;
  };
  const auto out_path = resolve(options.stdout_file, "stdout.txt");
  const auto err_path = resolve(options.stderr_file, "stderr.txt");

  // Everything the child touches is prepared before fork.
  std::vector<std::string> env_strings = build_env(options.env);
  std::vector<char*> env_ptrs;
  for (auto& s : env_strings) env_ptrs.push_back(s.data());
  env_ptrs.push_back(nullptr);
  std::vector<std::string> args = argv;
  args[0] = exe->string();
  std::vector<char*> arg_ptrs;
  for (auto& s : args) arg_ptrs.push_back(s.data());
  arg_ptrs.push_back(nullptr);
  const std::string cwd_str = cwd.string();
  const std::string out_str = out_path.string();
  const std::string err_str = err_path.string();
  const rlim_t fsize = static_cast<rlim_t>(std::max<std::size_t>(options.max_output_bytes * 8, 1u << 20));

  int exec_pipe[2];
  if (::pipe2(exec_pipe, O_CLOEXEC) != 0) throw Error(std::string("pipe2 failed: ") + std::strerror(errno));

  const auto start = std::chrono::steady_clock::now();
  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(exec_pipe[0]);
    ::close(exec_pipe[1]);
    throw Error(std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    int err = 0;
    if (::chdir(cwd_str.c_str()) != 0) err = errno;
    int in_fd = ::open("/dev/null", O_RDONLY);
    int out_fd = ::open(out_str.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    int err_fd = ::open(err_str.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (!err && (in_fd < 0 || out_fd < 0 || err_fd < 0)) err = errno;
    if (!err) {
      ::dup2(in_fd, 0);
      ::dup2(out_fd, 1);
      ::dup2(err_fd, 2);
      struct rlimit lim{fsize, fsize};
      ::setrlimit(RLIMIT_FSIZE, &lim);
      ::execve(arg_ptrs[0], arg_ptrs.data(), env_ptrs.data());
      err = errno;
    }
    [[maybe_unused]] auto n = ::write(exec_pipe[1], &err, sizeof err);
    ::_exit(127);
  }
  ::close(exec_pipe[1]);
  int exec_errno = 0;
  auto got = ::read(exec_pipe[0], &exec_errno, sizeof exec_errno);
  ::close(exec_pipe[0]);

  ProcessResult result;
  int status = 0;
  if (got == static_cast<ssize_t>(sizeof exec_errno)) {
    ::waitpid(pid, &status, 0);
    throw ToolMissing("cannot start " + argv[0] + ": " + std::strerror(exec_errno));
  }

  const auto deadline = start + options.timeout;
  auto poll = std::chrono::microseconds(500);
  for (;;) {
    pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      result.timed_out = true;
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
      }
      break;
    }
    std::this_thread::sleep_for(poll);
    poll = std::min(poll * 2, std::chrono::microseconds(20000));
  }
  // Reap stragglers left in the group.
  ::kill(-pid, SIGKILL);

  result.wall = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.term_signal = WTERMSIG(status);
  }
  result.out = read_capped(out_path, options.max_output_bytes);
  result.err = read_capped(err_path, options.max_output_bytes);
  return result;
}

void ProcessGate::set_limit(int limit) {
  std::lock_guard lock(gate_mutex);
  gate_limit = std::max(1, limit);
  gate_cv.notify_all();
}

int ProcessGate::limit() {
  std::lock_guard lock(gate_mutex);
  return gate_limit;
}

ProcessGate::Ticket::Ticket() {
  std::unique_lock lock(gate_mutex);
  gate_cv.wait(lock, [] { return gate_active < gate_limit; });
  ++gate_active;
  gate_peak = std::max(gate_peak, gate_active);
}

ProcessGate::Ticket::~Ticket() {
  std::lock_guard lock(gate_mutex);
  --gate_active;
  gate_cv.notify_one();
}

int ProcessGate::peak() {
  std::lock_guard lock(gate_mutex);
  return gate_peak;
}

void ProcessGate::reset_peak() {
  std::lock_guard lock(gate_mutex);
  gate_peak = gate_active;
}

}  // namespace rtlforge
