#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"
#include "deepreport/render.hpp"
#include "deepreport/text.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace deepreport::render {

namespace {

struct ProcessResult {
  int exit_code = -1;
  bool timed_out = false;
  std::string stderr_text;
};

ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::seconds timeout) {
  int err_pipe[2];
  if (pipe(err_pipe) != 0) throw Error(ErrorKind::rendering_environment, std::string("pipe: ") + std::strerror(errno));
  pid_t pid = fork();
  if (pid < 0) {
    close(err_pipe[0]);
    close(err_pipe[1]);
    throw Error(ErrorKind::rendering_environment, std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    dup2(err_pipe[1], STDERR_FILENO);
    int devnull = open("/dev/null", O_WRONLY);
    if (devnull >= 0) dup2(devnull, STDOUT_FILENO);
    close(err_pipe[0]);
    close(err_pipe[1]);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execv(args[0], args.data());
    dprintf(STDERR_FILENO, "{\"code\":\"exec\",\"message\":\"%s\"}", std::strerror(errno));
    _exit(127);
  }
  close(err_pipe[1]);

  ProcessResult result;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  char buf[4096];
  bool open_pipe = true;
  while (open_pipe) {
    auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      result.timed_out = true;
      kill(pid, SIGKILL);
      break;
    }
    pollfd pfd{err_pipe[0], POLLIN, 0};
    int rc = poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 200)));
    if (rc > 0) {
      ssize_t n = read(err_pipe[0], buf, sizeof buf);
      if (n > 0) result.stderr_text.append(buf, static_cast<std::size_t>(n));
      else open_pipe = false;
    } else if (rc < 0 && errno != EINTR) {
      open_pipe = false;
    }
  }
  close(err_pipe[0]);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!result.timed_out) result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  return result;
}

// Acquire/release pair that survives exceptions.
template <typename Sem>
struct SlotGuard {
  Sem& sem;
  explicit SlotGuard(Sem& s) : sem(s) { sem.acquire(); }
  ~SlotGuard() { sem.release(); }
};

}  // namespace

SubprocessHarness::SubprocessHarness(std::filesystem::path executable, int concurrency, std::chrono::seconds timeout)
    : executable_(std::move(executable)), timeout_(timeout), slots_(std::clamp(concurrency, 1, 64)) {}

void SubprocessHarness::render(const HarnessRequest& request) {
  if (executable_.empty()) throw Error(ErrorKind::rendering_environment, "no render harness configured");
  if (access(executable_.c_str(), X_OK) != 0)
    throw Error(ErrorKind::rendering_environment, "render harness not executable: " + executable_.string());

  SlotGuard guard(slots_);
  auto result = run_process({executable_.string(), "--spec", request.spec_path.string(), "--target",
                             to_string(request.target), "--out", request.output_path.string(), "--format",
                             to_string(request.format), "--width", std::to_string(request.width), "--height",
                             std::to_string(request.height)},
                            timeout_);
  if (result.timed_out) throw Error(ErrorKind::protocol, "render harness timed out");
  if (result.exit_code == 127) throw Error(ErrorKind::rendering_environment, "render harness could not start");
  if (result.exit_code != 0) {
    std::string message(text::trim(result.stderr_text));
    if (auto err = parse_reply_object(result.stderr_text)) message = err->value("message", message);
    throw Error(ErrorKind::protocol, "render harness failed (exit " + std::to_string(result.exit_code) + "): " + message);
  }
}

}  // namespace deepreport::render
