#include "ptrail/scenario.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "ptrail/ingest.hpp"
#include "ptrail/model.hpp"
#include "ptrail/util.hpp"

#include "json.hpp"

namespace ptrail {

using nlohmann::json;

std::string_view scenario_kind_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::Rat: return "rat";
    case ScenarioKind::DriveByDownload: return "drive-by";
    case ScenarioKind::ImSocialEngineering: return "im";
    case ScenarioKind::Csrf: return "csrf";
    case ScenarioKind::DnsRebinding: return "dns-rebinding";
  }
  return "";
}

std::optional<ScenarioKind> scenario_kind_from_name(std::string_view name) {
  if (name == "rat") return ScenarioKind::Rat;
  if (name == "drive-by") return ScenarioKind::DriveByDownload;
  if (name == "im") return ScenarioKind::ImSocialEngineering;
  if (name == "csrf") return ScenarioKind::Csrf;
  if (name == "dns-rebinding") return ScenarioKind::DnsRebinding;
  return std::nullopt;
}

std::string GroundTruth::to_json() const {
  json j{{"scenario", scenario},
         {"seed", seed},
         {"benign_units", benign_units},
         {"root", root_spec},
         {"seed_entity", seed_entity_spec},
         {"seed_at_seq", seed_at_seq},
         {"malicious_unit_key", malicious_unit_key},
         {"benign_inputs", benign_input_specs}};
  return j.dump(2) + "\n";
}

GroundTruth GroundTruth::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) {
    throw UserError("ground truth is not a JSON object");
  }
  GroundTruth t;
  t.scenario = j.value("scenario", "");
  t.seed = j.value("seed", std::uint64_t{0});
  t.benign_units = j.value("benign_units", 0);
  t.root_spec = j.value("root", "");
  t.seed_entity_spec = j.value("seed_entity", "");
  t.seed_at_seq = j.value("seed_at_seq", std::uint64_t{0});
  t.malicious_unit_key = j.value("malicious_unit_key", "");
  if (j.contains("benign_inputs")) {
    for (const auto& s : j["benign_inputs"]) {
      t.benign_input_specs.push_back(s.get<std::string>());
    }
  }
  return t;
}

namespace {

struct Proc {
  std::int32_t pid = 0;
  std::int32_t pgid = 0;
  std::string comm;
  std::int64_t next_fd = 3;
};

// Emits records with monotonic seq/ts and bookkeeps descriptors so the
// produced trace always builds with zero diagnostics.
class TraceWriter {
 public:
  explicit TraceWriter(std::uint64_t seed) : rng_(seed * 0x9e3779b97f4a7c15ull + 1) {}

  std::uint64_t rand(std::uint64_t n) { return rng_() % n; }

  std::uint64_t emit(const Proc& p, const std::string& call,
                     const std::string& args, std::int64_t retval) {
    ++seq_;
    ts_ += 80 + rand(240);
    out_ << seq_ << '|' << ts_ << '|' << p.pid << '|' << p.pid << '|'
         << p.pgid << '|' << util::escape_field(p.comm) << '|' << call << '|'
         << args << '|' << retval << '\n';
    return seq_;
  }

  void noise(const Proc& p, int count = 1) {
    static const char* kNoise[] = {"stat", "getpid", "mmap", "futex", "poll"};
    for (int i = 0; i < count; ++i) {
      emit(p, kNoise[rand(5)], "", 0);
    }
  }

  std::int64_t open(Proc& p, const std::string& path) {
    std::int64_t fd = p.next_fd++;
    emit(p, "open", "path=" + util::escape_field(path) + ";flags=O_RDWR", fd);
    return fd;
  }

  std::uint64_t read(const Proc& p, std::int64_t fd, std::int64_t n) {
    return emit(p, "read", "fd=" + std::to_string(fd), n);
  }

  std::uint64_t write(const Proc& p, std::int64_t fd, std::int64_t n) {
    return emit(p, "write", "fd=" + std::to_string(fd), n);
  }

  void lseek(const Proc& p, std::int64_t fd, std::uint64_t off) {
    emit(p, "lseek",
         "fd=" + std::to_string(fd) + ";offset=" + std::to_string(off) +
             ";whence=SEEK_SET",
         static_cast<std::int64_t>(off));
  }

  void close(const Proc& p, std::int64_t fd) {
    emit(p, "close", "fd=" + std::to_string(fd), 0);
  }

  std::int64_t socket(Proc& p) {
    std::int64_t fd = p.next_fd++;
    emit(p, "socket", "domain=AF_INET;type=SOCK_STREAM", fd);
    return fd;
  }

  void connect(Proc& p, std::int64_t fd, const std::string& remote,
               const std::string& local) {
    emit(p, "connect",
         "fd=" + std::to_string(fd) + ";addr=" + remote + ";laddr=" + local,
         0);
  }

  std::pair<std::int64_t, std::int64_t> socketpair(Proc& p) {
    std::int64_t a = p.next_fd++;
    std::int64_t b = p.next_fd++;
    emit(p, "socketpair",
         "domain=AF_UNIX;type=SOCK_STREAM;sv0=" + std::to_string(a) +
             ";sv1=" + std::to_string(b),
         0);
    return {a, b};
  }

  std::uint64_t recvmsg_peer(const Proc& p, std::int64_t fd,
                             std::int32_t peer, std::int64_t n) {
    return emit(p, "recvmsg",
                "fd=" + std::to_string(fd) + ";peer=" + std::to_string(peer),
                n);
  }

  std::uint64_t sendmsg(const Proc& p, std::int64_t fd, std::int64_t n) {
    return emit(p, "sendmsg", "fd=" + std::to_string(fd), n);
  }

  // Process clone: the new pid inherits descriptors; its own records carry
  // its own pgid/comm.
  void clone_proc(const Proc& parent, const Proc& child) {
    emit(parent, "clone", "flags=CLONE_FILES", child.pid);
  }

  void clone_thread(const Proc& parent, std::int32_t tid) {
    emit(parent, "clone",
         "flags=" + util::escape_field("CLONE_THREAD|CLONE_VM"), tid);
  }

  void execve(Proc& p, const std::string& path, const std::string& comm) {
    p.comm = comm;
    emit(p, "execve", "path=" + util::escape_field(path), 0);
  }

  void exit(const Proc& p) { emit(p, "exit_group", "code=0", 0); }

  std::string take() { return out_.str(); }
  std::uint64_t seq() const { return seq_; }

 private:
  std::ostringstream out_;
  std::uint64_t seq_ = 0;
  std::uint64_t ts_ = 1000;
  std::mt19937_64 rng_;
};

std::string local_addr(int n) {
  return "10.0.0.2:" + std::to_string(40000 + n);
}

// ---------------------------------------------------------------------------
// Browser scenarios (drive-by / CSRF / DNS rebinding) share one scaffold: a
// kernel group with IO and helper threads, one renderer process per tab,
// socketpair channels between them, and the network handled by the kernel
// side while a tab's unit is active.

struct BrowserWorld {
  Proc kernel{100, 100, "chrome"};
  Proc io{101, 100, "chrome_io"};
  Proc procl{102, 100, "chrome_procl"};
  struct Tab {
    Proc rend;
    std::int64_t pair_kernel = -1;  // kernel-side channel fd
    std::int64_t pair_rend = -1;    // renderer-side fd (inherited copy)
    std::string origin;
    bool external = false;
  };
  std::vector<Tab> tabs;  // [0..benign) benign, [benign] malicious
  int local_port_next = 0;
};

void browser_preamble(TraceWriter& w, BrowserWorld& world,
                      const ScenarioSpec& spec) {
  Proc& chrome = world.kernel;
  // Startup: configuration and library reads.
  int cycles = std::max(1, spec.preamble_events / 4);
  for (int i = 0; i < cycles; ++i) {
    std::int64_t fd =
        w.open(chrome, "/opt/browser/res/lib" + std::to_string(i % 37) + ".so");
    w.read(chrome, fd, 2048 + static_cast<std::int64_t>(w.rand(2048)));
    w.close(chrome, fd);
    if (w.rand(3) == 0) w.noise(chrome);
  }

  // IPC channels first, then the threads and renderers, so every clone
  // inherits the channel descriptors it will use.
  for (int t = 0; t <= spec.benign_units; ++t) {
    BrowserWorld::Tab tab;
    tab.rend = Proc{200 + t, 200 + t, "chrome_rend"};
    auto [k_fd, r_fd] = w.socketpair(world.kernel);
    tab.pair_kernel = k_fd;
    tab.pair_rend = r_fd;
    if (t == spec.benign_units) {
      tab.origin = "203.0.113.7:80";  // the hostile site
      tab.external = true;
    } else if (t % 2 == 0) {
      tab.origin = "10.0.1." + std::to_string(10 + t) + ":443";  // intranet
    } else {
      tab.origin = "198.51.100." + std::to_string(10 + t) + ":443";
      tab.external = true;
    }
    world.tabs.push_back(std::move(tab));
  }
  w.clone_thread(chrome, world.io.pid);
  world.io.next_fd = 200000;
  w.noise(world.io, 2);
  w.clone_thread(chrome, world.procl.pid);
  world.procl.next_fd = 300000;
  w.noise(world.procl, 1);
  for (int t = 0; t <= spec.benign_units; ++t) {
    auto& tab = world.tabs[t];
    w.clone_proc(world.kernel, tab.rend);
    tab.rend.next_fd = 100000 + 100 * t;  // clear of the inherited table
    w.noise(tab.rend, 1);
  }
}

// One activation of a benign tab: IPC request, fetch from the tab's origin,
// response back over the channel, cache writes. Kernel-side records stay
// contiguous so they all land in this tab's unit.
void browser_benign_visit(TraceWriter& w, BrowserWorld& world, int tab_index,
                          int flow_events) {
  auto& tab = world.tabs[tab_index];
  w.write(tab.rend, tab.pair_rend, 128);
  w.recvmsg_peer(world.io, tab.pair_kernel, tab.rend.pid, 128);
  std::int64_t sock = w.socket(world.io);
  w.connect(world.io, sock, tab.origin, local_addr(world.local_port_next++));
  int reads = std::max(2, flow_events / 3);
  for (int i = 0; i < reads; ++i) {
    w.read(world.io, sock, 1200 + static_cast<std::int64_t>(w.rand(300)));
  }
  w.sendmsg(world.io, tab.pair_kernel, 4096);
  w.close(world.io, sock);
  w.recvmsg_peer(tab.rend, tab.pair_rend, world.kernel.pid, 4096);
  std::int64_t cache = w.open(
      tab.rend, "/home/alice/.cache/browser/tab" + std::to_string(tab.rend.pid));
  int writes = std::max(1, flow_events - reads - 4);
  for (int i = 0; i < writes; ++i) {
    w.write(tab.rend, cache, 512 + static_cast<std::int64_t>(w.rand(512)));
  }
  w.close(tab.rend, cache);
  if (w.rand(2) == 0) w.noise(tab.rend, 2);
}

struct MaliciousResult {
  std::string seed_entity_spec;
  std::uint64_t seed_at_seq = 0;
  std::string root_spec;
  std::string malicious_unit_key;
};

// CSRF and DNS rebinding: the hostile page makes the browser itself talk to
// an intranet service. For rebinding the second connection goes to the
// re-resolved intranet address and its response is read back and exfiltrated.
MaliciousResult browser_web_attack(TraceWriter& w, BrowserWorld& world,
                                   bool rebound) {
  auto& tab = world.tabs.back();
  MaliciousResult result;
  result.malicious_unit_key = std::to_string(tab.rend.pid);

  w.write(tab.rend, tab.pair_rend, 256);
  w.recvmsg_peer(world.io, tab.pair_kernel, tab.rend.pid, 256);
  std::int64_t evil = w.socket(world.io);
  std::string evil_local = local_addr(world.local_port_next++);
  w.connect(world.io, evil, tab.origin, evil_local);
  w.read(world.io, evil, 1800);
  w.read(world.io, evil, 900);
  result.root_spec = "sock:" + evil_local + "-" + tab.origin;

  // Page script back to the renderer, then the scripted intranet request.
  w.sendmsg(world.io, tab.pair_kernel, 2048);
  w.recvmsg_peer(tab.rend, tab.pair_rend, world.kernel.pid, 2048);
  w.write(tab.rend, tab.pair_rend, 300);
  w.recvmsg_peer(world.io, tab.pair_kernel, tab.rend.pid, 300);

  std::string target =
      rebound ? "10.0.0.20:80" : "10.0.0.5:443";  // router admin vs web app
  std::int64_t intranet = w.socket(world.io);
  std::string intranet_local = local_addr(world.local_port_next++);
  w.connect(world.io, intranet, target, intranet_local);
  result.seed_at_seq = w.write(world.io, intranet, 400);
  result.seed_entity_spec = "sock:" + intranet_local + "-" + target;
  w.write(world.io, intranet, 280);
  if (rebound) {
    // Same-origin check is now satisfied; read the intranet data and ship it
    // out to the attacker. Later seqs, so backward analysis ignores them.
    w.read(world.io, intranet, 5000);
    w.sendmsg(world.io, tab.pair_kernel, 5000);
    w.recvmsg_peer(tab.rend, tab.pair_rend, world.kernel.pid, 5000);
    w.write(tab.rend, tab.pair_rend, 5000);
    w.recvmsg_peer(world.io, tab.pair_kernel, tab.rend.pid, 5000);
    std::int64_t exfil = w.socket(world.io);
    w.connect(world.io, exfil, "203.0.113.7:8080",
              local_addr(world.local_port_next++));
    w.write(world.io, exfil, 5000);
    w.close(world.io, exfil);
  }
  w.close(world.io, intranet);
  w.close(world.io, evil);
  return result;
}

// Drive-by: the hostile response exploits a plugin; the helper thread spawns
// the payload chain, which ends in a pull from the intranet git server over
// ssh and an exfiltration socket.
MaliciousResult browser_drive_by(TraceWriter& w, BrowserWorld& world,
                                 int opaque_steps) {
  auto& tab = world.tabs.back();
  MaliciousResult result;
  result.malicious_unit_key = std::to_string(tab.rend.pid);

  w.write(tab.rend, tab.pair_rend, 256);
  w.recvmsg_peer(world.io, tab.pair_kernel, tab.rend.pid, 256);
  std::int64_t evil = w.socket(world.io);
  std::string evil_local = local_addr(world.local_port_next++);
  w.connect(world.io, evil, tab.origin, evil_local);
  w.read(world.io, evil, 4096);
  w.read(world.io, evil, 4096);
  result.root_spec = "sock:" + evil_local + "-" + tab.origin;

  // Exploit payload reaches the renderer and the plugin-launcher thread.
  w.sendmsg(world.io, tab.pair_kernel, 8192);
  w.recvmsg_peer(tab.rend, tab.pair_rend, world.kernel.pid, 8192);
  w.write(tab.rend, tab.pair_rend, 512);
  w.recvmsg_peer(world.procl, tab.pair_kernel, tab.rend.pid, 512);

  // Dropper chain; the hop count stands in for exploit-kit internals.
  Proc dropper{700, 700, world.procl.comm};
  w.clone_proc(world.procl, dropper);
  w.execve(dropper, "/usr/lib/jvm/bin/java", "java");
  std::int64_t payload_fd = w.open(dropper, "/tmp/.payload.sh");
  w.write(dropper, payload_fd, 740);
  w.close(dropper, payload_fd);

  Proc prev = dropper;
  for (int i = 0; i < opaque_steps; ++i) {
    Proc hop{710 + i, 710 + i, prev.comm};
    w.clone_proc(prev, hop);
    w.execve(hop, "/usr/lib/exploit/stage" + std::to_string(i),
             "stage" + std::to_string(i));
    w.noise(hop, 1);
    prev = hop;
  }

  Proc shell{760, 760, prev.comm};
  w.clone_proc(prev, shell);
  w.execve(shell, "/bin/sh", "sh");
  std::int64_t script_fd = w.open(shell, "/tmp/.payload.sh");
  w.read(shell, script_fd, 740);
  w.close(shell, script_fd);

  Proc git{770, 770, "sh"};
  w.clone_proc(shell, git);
  w.execve(git, "/usr/bin/git", "git");
  Proc ssh{771, 771, "git"};
  w.clone_proc(git, ssh);
  w.execve(ssh, "/usr/bin/ssh", "ssh");
  std::int64_t gitsock = w.socket(ssh);
  std::string git_local = local_addr(world.local_port_next++);
  w.connect(ssh, gitsock, "10.0.0.10:22", git_local);
  result.seed_at_seq = w.write(ssh, gitsock, 512);
  result.seed_entity_spec = "sock:" + git_local + "-10.0.0.10:22";
  w.read(ssh, gitsock, 65536);  // the pulled tree, for forward analysis
  std::int64_t loot = w.open(ssh, "/tmp/.loot.tar");
  w.write(ssh, loot, 65536);
  w.close(ssh, loot);

  std::int64_t c2 = w.socket(shell);
  w.connect(shell, c2, "203.0.113.9:4444",
            local_addr(world.local_port_next++));
  std::int64_t loot_rd = w.open(shell, "/tmp/.loot.tar");
  w.read(shell, loot_rd, 65536);
  w.write(shell, c2, 65536);
  w.close(shell, loot_rd);
  w.close(shell, c2);
  w.close(world.io, evil);
  return result;
}

ScenarioOutput generate_browser(const ScenarioSpec& spec) {
  TraceWriter w(spec.seed);
  BrowserWorld world;
  browser_preamble(w, world, spec);

  // The user browses; the hostile tab is visited last. Benign tabs may be
  // revisited (their units resume) before and after the attack.
  std::vector<int> order;
  for (int t = 0; t < spec.benign_units; ++t) order.push_back(t);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[w.rand(i)]);
  }
  for (int t : order) {
    browser_benign_visit(w, world, t, spec.events_per_unit);
  }
  int revisits = spec.benign_units > 0 ? 1 + static_cast<int>(w.rand(3)) : 0;
  for (int i = 0; i < revisits; ++i) {
    browser_benign_visit(w, world,
                         static_cast<int>(w.rand(spec.benign_units)),
                         std::max(4, spec.events_per_unit / 4));
  }

  MaliciousResult mal;
  switch (spec.kind) {
    case ScenarioKind::DriveByDownload:
      mal = browser_drive_by(w, world, spec.opaque_steps);
      break;
    case ScenarioKind::DnsRebinding:
      mal = browser_web_attack(w, world, true);
      break;
    default:
      mal = browser_web_attack(w, world, false);
      break;
  }

  // Tail activity after detection.
  if (spec.benign_units > 0) {
    browser_benign_visit(w, world, static_cast<int>(w.rand(spec.benign_units)),
                         std::max(4, spec.events_per_unit / 4));
  }

  ScenarioOutput out;
  out.truth.scenario = std::string(scenario_kind_name(spec.kind));
  out.truth.seed = spec.seed;
  out.truth.benign_units = spec.benign_units;
  out.truth.root_spec = mal.root_spec;
  out.truth.seed_entity_spec = mal.seed_entity_spec;
  out.truth.seed_at_seq = mal.seed_at_seq;
  out.truth.malicious_unit_key = mal.malicious_unit_key;
  for (int t = 0; t < spec.benign_units; ++t) {
    out.truth.benign_input_specs.push_back("sock:*-" + world.tabs[t].origin);
  }
  out.trace_text = w.take();
  return out;
}

// ---------------------------------------------------------------------------
// Mail scenario: messages sync into one spool file at distinct offsets; the
// unit of work is the message being read, keyed by its offset.

ScenarioOutput generate_rat(const ScenarioSpec& spec) {
  TraceWriter w(spec.seed);
  const std::string inbox = "/home/alice/.mail/INBOX";
  Proc tbird{300, 300, "thunderbird"};

  int cycles = std::max(1, spec.preamble_events / 4);
  for (int i = 0; i < cycles; ++i) {
    std::int64_t fd =
        w.open(tbird, "/home/alice/.mail/prefs" + std::to_string(i % 11));
    w.read(tbird, fd, 512);
    w.close(tbird, fd);
  }

  int n_mail = spec.benign_units + 1;
  int malicious = static_cast<int>(w.rand(n_mail));
  std::vector<std::uint64_t> offsets, lengths;
  for (int i = 0; i < n_mail; ++i) {
    offsets.push_back(4096ull * static_cast<std::uint64_t>(i));
    lengths.push_back(600 + w.rand(3000));
  }

  // Sync: fetch each message from the relay, store at its own offset.
  std::int64_t inbox_fd = w.open(tbird, inbox);
  std::int64_t mail_sock = w.socket(tbird);
  std::string mail_local = local_addr(1);
  const std::string mail_remote = "203.0.113.25:993";
  w.connect(tbird, mail_sock, mail_remote, mail_local);
  for (int i = 0; i < n_mail; ++i) {
    w.read(tbird, mail_sock, static_cast<std::int64_t>(lengths[i]));
    w.lseek(tbird, inbox_fd, offsets[i]);
    w.write(tbird, inbox_fd, static_cast<std::int64_t>(lengths[i]));
    if (w.rand(4) == 0) w.noise(tbird);
  }

  auto read_message = [&](int i, int extra_reads) {
    w.lseek(tbird, inbox_fd, offsets[i]);
    w.read(tbird, inbox_fd, static_cast<std::int64_t>(lengths[i]));
    for (int r = 0; r < extra_reads; ++r) {
      // Rendering churn: scratch writes while the message is on screen.
      std::int64_t fd = w.open(
          tbird, "/home/alice/.mail/cache/m" + std::to_string(i) + "-" +
                     std::to_string(r));
      w.write(tbird, fd, 256);
      w.close(tbird, fd);
    }
  };

  // The user reads mail; the trojaned message is opened last.
  std::vector<int> order;
  for (int i = 0; i < n_mail; ++i) {
    if (i != malicious) order.push_back(i);
  }
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[w.rand(i)]);
  }
  int extra = std::max(1, (spec.events_per_unit - 2) / 3);
  for (int i : order) read_message(i, extra);
  read_message(malicious, extra);

  // Attachment saved, then run from a shell.
  const std::string dropper = "/home/alice/Downloads/invoice.sh";
  std::int64_t att = w.open(tbird, dropper);
  w.write(tbird, att, static_cast<std::int64_t>(lengths[malicious]));
  w.close(tbird, att);

  Proc bash{400, 400, "bash"};
  std::int64_t rc = w.open(bash, "/home/alice/.bashrc");
  w.read(bash, rc, 800);
  w.close(bash, rc);
  Proc runner{401, 401, "bash"};
  w.clone_proc(bash, runner);
  w.execve(runner, "/bin/bash", "bash");
  std::int64_t script = w.open(runner, dropper);
  w.read(runner, script, static_cast<std::int64_t>(lengths[malicious]));
  w.close(runner, script);
  Proc nmap{402, 402, "bash"};
  w.clone_proc(runner, nmap);
  w.execve(nmap, "/usr/bin/nmap", "nmap");

  std::int64_t scan = w.socket(nmap);
  std::string scan_local = local_addr(2);
  const std::string scan_remote = "10.0.0.40:443";
  w.connect(nmap, scan, scan_remote, scan_local);
  std::uint64_t seed_seq = w.write(nmap, scan, 64);
  w.read(nmap, scan, 128);
  for (int hosts = 0; hosts < 3; ++hosts) {
    std::int64_t s = w.socket(nmap);
    w.connect(nmap, s, "10.0.0." + std::to_string(41 + hosts) + ":22",
              local_addr(3 + hosts));
    w.write(nmap, s, 64);
    w.close(nmap, s);
  }
  w.exit(nmap);
  w.exit(runner);

  ScenarioOutput out;
  out.truth.scenario = std::string(scenario_kind_name(spec.kind));
  out.truth.seed = spec.seed;
  out.truth.benign_units = spec.benign_units;
  out.truth.root_spec = "sock:" + mail_local + "-" + mail_remote;
  out.truth.seed_entity_spec = "sock:" + scan_local + "-" + scan_remote;
  out.truth.seed_at_seq = seed_seq;
  out.truth.malicious_unit_key =
      inbox + "@" + std::to_string(offsets[malicious]);
  for (int i = 0; i < n_mail; ++i) {
    if (i == malicious) continue;
    out.truth.benign_input_specs.push_back(
        "file:" + inbox + "@" + std::to_string(offsets[i]) + "," +
        std::to_string(offsets[i] + lengths[i]));
  }
  out.trace_text = w.take();
  return out;
}

// ---------------------------------------------------------------------------
// Chat scenario: one log file per conversation; the hostile conversation
// carries a link that forks a browser at an intranet target.

ScenarioOutput generate_im(const ScenarioSpec& spec) {
  TraceWriter w(spec.seed);
  Proc pidgin{500, 500, "pidgin"};
  auto chatlog = [](int i) {
    return "/home/alice/.purple/logs/jabber/alice/buddy" + std::to_string(i) +
           ".html";
  };

  int cycles = std::max(1, spec.preamble_events / 4);
  for (int i = 0; i < cycles; ++i) {
    std::int64_t fd =
        w.open(pidgin, "/home/alice/.purple/prefs" + std::to_string(i % 7));
    w.read(pidgin, fd, 256);
    w.close(pidgin, fd);
  }
  std::int64_t relay = w.socket(pidgin);
  std::string relay_local = local_addr(1);
  const std::string relay_remote = "203.0.113.50:5222";
  w.connect(pidgin, relay, relay_remote, relay_local);

  int n_chat = spec.benign_units + 1;
  int malicious = n_chat - 1;
  std::vector<std::uint64_t> extents(n_chat, 0);

  // Browsing old conversations: open, read the history, jot a line.
  auto view_chat = [&](int i, int lines) {
    std::int64_t fd = w.open(pidgin, chatlog(i));
    std::int64_t n = 300 + static_cast<std::int64_t>(w.rand(500));
    w.read(pidgin, fd, n);
    extents[i] = std::max<std::uint64_t>(extents[i], n);
    for (int l = 0; l < lines; ++l) w.noise(pidgin);
    w.close(pidgin, fd);
  };

  std::vector<int> order;
  for (int i = 0; i < n_chat - 1; ++i) order.push_back(i);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[w.rand(i)]);
  }
  int lines = std::max(1, spec.events_per_unit / 2);
  for (int i : order) view_chat(i, lines);

  // The live conversation: messages arrive over the relay while its window
  // is focused. The client rewrites the rendered log from the top, so the
  // read and write regions coincide.
  std::int64_t fd = w.open(pidgin, chatlog(malicious));
  std::int64_t total = 300;
  w.read(pidgin, fd, total);
  extents[malicious] = static_cast<std::uint64_t>(total);
  for (int m = 0; m < 3; ++m) {
    w.read(pidgin, relay, 200);
    total += 120 + static_cast<std::int64_t>(w.rand(80));
    w.lseek(pidgin, fd, 0);
    w.write(pidgin, fd, total);
    w.lseek(pidgin, fd, 0);
    w.read(pidgin, fd, total);
    extents[malicious] = static_cast<std::uint64_t>(total);
  }
  w.close(pidgin, fd);

  Proc browser{600, 600, "pidgin"};
  w.clone_proc(pidgin, browser);
  w.execve(browser, "/usr/bin/browser", "browser");
  std::int64_t sock = w.socket(browser);
  std::string sock_local = local_addr(2);
  const std::string target = "10.0.0.30:443";
  w.connect(browser, sock, target, sock_local);
  std::uint64_t seed_seq = w.write(browser, sock, 350);
  w.read(browser, sock, 900);
  w.close(browser, sock);
  w.exit(browser);

  ScenarioOutput out;
  out.truth.scenario = std::string(scenario_kind_name(spec.kind));
  out.truth.seed = spec.seed;
  out.truth.benign_units = spec.benign_units;
  out.truth.root_spec = "sock:" + relay_local + "-" + relay_remote;
  out.truth.seed_entity_spec = "sock:" + sock_local + "-" + target;
  out.truth.seed_at_seq = seed_seq;
  out.truth.malicious_unit_key = chatlog(malicious);
  for (int i = 0; i < n_chat - 1; ++i) {
    out.truth.benign_input_specs.push_back(
        "file:" + chatlog(i) + "@0," + std::to_string(extents[i]));
  }
  out.trace_text = w.take();
  return out;
}

}  // namespace

ScenarioOutput generate(const ScenarioSpec& spec) {
  switch (spec.kind) {
    case ScenarioKind::Rat: return generate_rat(spec);
    case ScenarioKind::ImSocialEngineering: return generate_im(spec);
    case ScenarioKind::DriveByDownload:
    case ScenarioKind::Csrf:
    case ScenarioKind::DnsRebinding:
      return generate_browser(spec);
  }
  throw UserError("unknown scenario kind");
}

std::string make_bench_trace(std::size_t n_events, std::uint64_t seed) {
  TraceWriter w(seed);
  std::vector<Proc> procs;
  for (int i = 0; i < 48; ++i) {
    procs.push_back(Proc{1000 + i, 1000 + i, "worker" + std::to_string(i % 8)});
  }
  std::size_t p = 0;
  while (w.seq() < n_events) {
    Proc& proc = procs[p];
    p = (p + 1) % procs.size();
    std::int64_t fd = w.open(
        proc, "/var/data/shard" + std::to_string(w.rand(64)) + ".bin");
    for (int r = 0; r < 6; ++r) w.read(proc, fd, 4096);
    std::int64_t out_fd =
        w.open(proc, "/var/out/part" + std::to_string(w.rand(64)) + ".bin");
    for (int wr = 0; wr < 6; ++wr) w.write(proc, out_fd, 4096);
    w.close(proc, out_fd);
    w.close(proc, fd);
    if (w.rand(4) == 0) w.noise(proc, 2);
  }
  return w.take();
}

}  // namespace ptrail
