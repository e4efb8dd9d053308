#ifndef SMAL_SERVICE_HPP
#define SMAL_SERVICE_HPP

#include "smal/codec.hpp"
#include "smal/demonstration.hpp"
#include "smal/simulator.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace smal::service {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;
using json = nlohmann::json;

struct ServiceConfig {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;  // 0 picks a free port
    int tick_ms = 100;
    std::filesystem::path demo_dir;  // empty: demonstrations are kept in memory only
    bool auto_record = false;        // start recording when a writer connects
    std::size_t max_pending = 8;     // per-connection outbound queue bound
};

// ---------------------------------------------------------------------------
// Messages

inline std::string frame_message(const std::string& session, int step, const Frame& frame) {
    return json{{"type", "frame"}, {"session", session}, {"step", step}, {"png_base64", base64_encode(encode_png(frame))}}
        .dump();
}

inline std::string state_message(const Pose& pose, bool recording, int collisions) {
    return json{{"type", "state"},
                {"pose", {pose.x, pose.y, static_cast<int>(pose.heading)}},
                {"recording", recording},
                {"collisions", collisions}}
        .dump();
}

inline std::string error_message(const std::string& reason) { return json{{"type", "error"}, {"reason", reason}}.dump(); }

struct Outgoing {
    std::string text;
    bool droppable = false;  // frames may be dropped for a lagging client
};

/**
 * @brief Outbound buffer that never grows past its capacity.
 *
 * When full, the oldest droppable message is discarded; if none is
 * droppable, the oldest message is.
 */
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {}

    void push(Outgoing msg) {
        if (items_.size() >= capacity_) {
            auto victim = std::ranges::find_if(items_, [](const Outgoing& o) { return o.droppable; });
            if (victim == items_.end()) victim = items_.begin();
            items_.erase(victim);
            ++dropped_;
        }
        items_.push_back(std::move(msg));
    }

    bool empty() const { return items_.empty(); }
    std::size_t size() const { return items_.size(); }
    std::size_t dropped() const { return dropped_; }
    const Outgoing& front() const { return items_.front(); }
    void pop() { items_.pop_front(); }

private:
    std::size_t capacity_;
    std::deque<Outgoing> items_;
    std::size_t dropped_ = 0;
};

// ---------------------------------------------------------------------------
// Simulation side of one session; not thread-safe, the server serializes access.

enum class ControlOp { StartDemo, StopDemo, Reset };

inline std::optional<ControlOp> parse_control(std::string_view s) {
    if (s == "start_demo") return ControlOp::StartDemo;
    if (s == "stop_demo") return ControlOp::StopDemo;
    if (s == "reset") return ControlOp::Reset;
    return std::nullopt;
}

class SimSession {
public:
    SimSession(std::string id, SimWorld world, std::filesystem::path demo_dir = {})
        : id_(std::move(id)), world_(std::move(world)), demo_dir_(std::move(demo_dir)) {}

    /// Commands arriving between ticks collapse to the latest one.
    void command(Atom atom) { pending_atom_ = atom; }
    void control(ControlOp op) { pending_controls_.push_back(op); }

    /// Apply queued controls, then at most one atom. Returns the messages to broadcast.
    std::vector<Outgoing> tick() {
        bool changed = false;
        for (ControlOp op : pending_controls_) {
            changed = true;
            switch (op) {
                case ControlOp::StartDemo:
                    if (!recording_) {
                        recorder_.start(world_);
                        recording_ = true;
                    }
                    break;
                case ControlOp::StopDemo:
                    if (recording_) finish_demo(false);
                    break;
                case ControlOp::Reset:
                    if (recording_) finish_demo(true);
                    world_.reset();
                    ++step_;
                    break;
            }
        }
        pending_controls_.clear();
        if (pending_atom_) {
            apply_atom(world_, *pending_atom_);
            if (recording_) recorder_.record(*pending_atom_, world_);
            pending_atom_.reset();
            ++step_;
            changed = true;
        }
        if (!changed) return {};
        return snapshot();
    }

    std::vector<Outgoing> snapshot() const {
        return {{frame_message(id_, step_, render(world_)), true},
                {state_message(world_.robot, recording_, world_.collision_count), false}};
    }

    /// The writer went away: an unfinished recording is kept, flagged as truncated.
    void writer_disconnected() {
        pending_atom_.reset();
        pending_controls_.clear();
        if (recording_) finish_demo(true);
    }

    const std::string& id() const { return id_; }
    const SimWorld& world() const { return world_; }
    bool recording() const { return recording_; }
    int step() const { return step_; }
    const std::vector<Demonstration>& demos() const { return demos_; }
    const std::vector<std::filesystem::path>& saved() const { return saved_; }

private:
    void finish_demo(bool truncated) {
        recording_ = false;
        demos_.push_back(recorder_.finish(truncated));
        if (demo_dir_.empty()) return;
        std::filesystem::create_directories(demo_dir_);
        const auto path = demo_dir_ / (id_ + "-" + std::to_string(demos_.size()) + ".demo");
        save_demo(demos_.back(), path);
        saved_.push_back(path);
    }

    std::string id_;
    SimWorld world_;
    std::filesystem::path demo_dir_;
    std::optional<Atom> pending_atom_;
    std::vector<ControlOp> pending_controls_;
    DemoRecorder recorder_;
    bool recording_ = false;
    int step_ = 0;
    std::vector<Demonstration> demos_;
    std::vector<std::filesystem::path> saved_;
};

// ---------------------------------------------------------------------------
// Network side

inline std::string session_from_target(std::string_view target) {
    const auto q = target.find('?');
    if (q == std::string_view::npos) return "default";
    std::string_view query = target.substr(q + 1);
    while (!query.empty()) {
        const auto amp = query.find('&');
        const std::string_view pair = query.substr(0, amp);
        if (pair.starts_with("session=") && pair.size() > 8) return std::string(pair.substr(8));
        if (amp == std::string_view::npos) break;
        query.remove_prefix(amp + 1);
    }
    return "default";
}

class Server;

class Connection : public std::enable_shared_from_this<Connection> {
public:
    Connection(tcp::socket socket, Server& server, std::size_t max_pending)
        : executor_(socket.get_executor()), stream_(std::move(socket)), server_(server), outbox_(max_pending) {}

    void start() { read_request(); }
    void send(Outgoing msg);
    void close();

    const std::string& session() const { return session_; }
    std::size_t dropped() const { return outbox_.dropped(); }

private:
    void read_request();
    void on_request();
    void read_message();
    void write_next();

    net::any_io_executor executor_;
    beast::tcp_stream stream_;
    std::optional<websocket::stream<beast::tcp_stream>> ws_;
    Server& server_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> request_;
    std::shared_ptr<http::response<http::string_body>> response_;
    BoundedQueue outbox_;
    bool writing_ = false;
    bool closed_ = false;
    std::string session_;
};

/**
 * @brief Teleoperation service: HTTP health endpoint plus a websocket per client.
 *
 * All network I/O runs on one io thread; the simulation advances on a
 * separate tick thread. The two meet only through the session table (under
 * a mutex) and posted sends, so a slow client can never stall a tick.
 */
class Server {
public:
    Server(SimWorld world, ServiceConfig cfg) : world_(std::move(world)), cfg_(std::move(cfg)), acceptor_(ioc_) {
        world_.validate();
        if (cfg_.tick_ms < 1) throw std::invalid_argument("tick interval must be >= 1 ms");
        const tcp::endpoint ep(net::ip::make_address(cfg_.address), cfg_.port);
        boost::system::error_code ec;
        acceptor_.open(ep.protocol(), ec);
        if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
        if (!ec) acceptor_.bind(ep, ec);
        if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
        if (ec) throw std::runtime_error("cannot listen on " + cfg_.address + ":" + std::to_string(cfg_.port) + ": " + ec.message());
    }

    ~Server() { stop(); }
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    unsigned short port() const { return acceptor_.local_endpoint().port(); }

    void start() {
        if (running_.exchange(true)) return;
        accept();
        io_thread_ = std::thread([this] { ioc_.run(); });
        tick_thread_ = std::thread([this] { tick_loop(); });
    }

    /// Stop accepting, drop every connection, and keep unfinished recordings as truncated demos.
    void stop() {
        if (!running_.exchange(false)) return;
        tick_thread_.join();
        std::promise<void> closed;
        net::post(ioc_, [this, &closed] {
            boost::system::error_code ec;
            acceptor_.close(ec);
            for (const auto& c : connections_) c->close();
            connections_.clear();
            closed.set_value();
        });
        closed.get_future().wait_for(std::chrono::seconds(5));
        ioc_.stop();
        io_thread_.join();
        std::lock_guard lock(mu_);
        for (auto& [_, entry] : sessions_) entry.sim.writer_disconnected();
    }

    /// Snapshot of a session's finished demonstrations (for tests and tooling).
    std::vector<Demonstration> demos(const std::string& session) {
        std::lock_guard lock(mu_);
        const auto it = sessions_.find(session);
        return it == sessions_.end() ? std::vector<Demonstration>{} : it->second.sim.demos();
    }

    std::optional<Pose> pose(const std::string& session) {
        std::lock_guard lock(mu_);
        const auto it = sessions_.find(session);
        if (it == sessions_.end()) return std::nullopt;
        return it->second.sim.world().robot;
    }

private:
    friend class Connection;

    struct Entry {
        SimSession sim;
        Connection* writer = nullptr;
        std::set<std::shared_ptr<Connection>> members;
    };

    void accept() {
        acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
            if (ec) return;
            auto conn = std::make_shared<Connection>(std::move(socket), *this, cfg_.max_pending);
            connections_.insert(conn);
            conn->start();
            accept();
        });
    }

    // io thread
    void join(const std::shared_ptr<Connection>& conn) {
        std::vector<Outgoing> hello;
        {
            std::lock_guard lock(mu_);
            auto it = sessions_.find(conn->session());
            if (it == sessions_.end())
                it = sessions_.emplace(conn->session(), Entry{SimSession(conn->session(), world_, cfg_.demo_dir), nullptr, {}})
                         .first;
            Entry& e = it->second;
            e.members.insert(conn);
            if (!e.writer) {
                e.writer = conn.get();
                if (cfg_.auto_record) {
                    e.sim.control(ControlOp::StartDemo);
                    e.sim.tick();
                }
            }
            hello = e.sim.snapshot();
        }
        for (auto& m : hello) conn->send(std::move(m));
    }

    // io thread
    void leave(const std::shared_ptr<Connection>& conn) {
        connections_.erase(conn);
        std::lock_guard lock(mu_);
        const auto it = sessions_.find(conn->session());
        if (it == sessions_.end()) return;
        Entry& e = it->second;
        e.members.erase(conn);
        if (e.writer == conn.get()) {
            e.writer = nullptr;
            e.sim.writer_disconnected();
        }
    }

    // io thread: parse one client message; errors go back to the sender only.
    void handle(const std::shared_ptr<Connection>& conn, const std::string& text) {
        auto reply_error = [&](const std::string& reason) { conn->send({error_message(reason), false}); };
        json msg;
        try {
            msg = json::parse(text);
        } catch (const json::exception&) {
            return reply_error("malformed message");
        }
        if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string())
            return reply_error("message has no type");
        const std::string type = msg["type"];
        std::string session = conn->session();
        if (msg.contains("session")) {
            if (!msg["session"].is_string()) return reply_error("session must be a string");
            session = msg["session"];
        }

        std::lock_guard lock(mu_);
        const auto it = sessions_.find(session);
        if (it == sessions_.end()) return reply_error("session-not-found: " + session);
        Entry& e = it->second;
        if (e.writer != conn.get()) return reply_error("read-only connection for session " + session);
        if (type == "command") {
            const auto atom = msg.contains("atom") && msg["atom"].is_string()
                                  ? parse_atom(msg["atom"].get<std::string>())
                                  : std::nullopt;
            if (!atom) return reply_error("unknown atom");
            e.sim.command(*atom);
        } else if (type == "control") {
            const auto op = msg.contains("op") && msg["op"].is_string() ? parse_control(msg["op"].get<std::string>())
                                                                        : std::nullopt;
            if (!op) return reply_error("unknown control op");
            e.sim.control(*op);
        } else {
            reply_error("unknown message type '" + type + "'");
        }
    }

    void tick_loop() {
        const auto period = std::chrono::milliseconds(cfg_.tick_ms);
        auto next = std::chrono::steady_clock::now() + period;
        while (running_) {
            std::this_thread::sleep_until(next);
            next += period;
            std::vector<std::pair<std::vector<std::shared_ptr<Connection>>, std::vector<Outgoing>>> out;
            {
                std::lock_guard lock(mu_);
                for (auto& [_, e] : sessions_) {
                    auto msgs = e.sim.tick();
                    if (msgs.empty()) continue;
                    out.emplace_back(std::vector<std::shared_ptr<Connection>>(e.members.begin(), e.members.end()),
                                     std::move(msgs));
                }
            }
            for (auto& [conns, msgs] : out)
                for (const auto& c : conns)
                    for (const auto& m : msgs) c->send(m);
        }
    }

    SimWorld world_;
    ServiceConfig cfg_;
    net::io_context ioc_;
    tcp::acceptor acceptor_;
    std::atomic<bool> running_{false};
    std::thread io_thread_;
    std::thread tick_thread_;
    std::set<std::shared_ptr<Connection>> connections_;  // io thread only
    std::mutex mu_;
    std::map<std::string, Entry> sessions_;
};

inline void Connection::read_request() {
    http::async_read(stream_, buffer_, request_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) return self->server_.leave(self);
        self->on_request();
    });
}

inline void Connection::on_request() {
    const std::string target(request_.target());
    if (websocket::is_upgrade(request_) && target.starts_with("/ws")) {
        session_ = session_from_target(target);
        ws_.emplace(std::move(stream_));
        ws_->text(true);
        ws_->async_accept(request_, [self = shared_from_this()](beast::error_code ec) {
            if (ec) return self->server_.leave(self);
            self->server_.join(self);
            self->read_message();
        });
        return;
    }
    response_ = std::make_shared<http::response<http::string_body>>();
    response_->version(request_.version());
    response_->set(http::field::content_type, "application/json");
    if (request_.method() == http::verb::get && target == "/health") {
        response_->result(http::status::ok);
        response_->body() = json{{"status", "ok"}}.dump();
    } else {
        response_->result(http::status::not_found);
        response_->body() = error_message("not found");
    }
    response_->keep_alive(false);
    response_->prepare_payload();
    http::async_write(stream_, *response_, [self = shared_from_this()](beast::error_code, std::size_t) {
        boost::system::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
        self->server_.leave(self);
    });
}

inline void Connection::read_message() {
    buffer_.clear();
    ws_->async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
        if (ec) {
            self->closed_ = true;
            return self->server_.leave(self);
        }
        self->server_.handle(self, beast::buffers_to_string(self->buffer_.data()));
        self->read_message();
    });
}

// Callable from any thread: the queue is only touched on the io thread.
inline void Connection::send(Outgoing msg) {
    net::post(executor_, [self = shared_from_this(), msg = std::move(msg)]() mutable {
        if (self->closed_ || !self->ws_) return;
        self->outbox_.push(std::move(msg));
        if (!self->writing_) self->write_next();
    });
}

inline void Connection::write_next() {
    if (outbox_.empty() || closed_) {
        writing_ = false;
        return;
    }
    writing_ = true;
    auto text = std::make_shared<std::string>(outbox_.front().text);
    outbox_.pop();
    ws_->async_write(net::buffer(*text), [self = shared_from_this(), text](beast::error_code ec, std::size_t) {
        if (ec) {
            self->closed_ = true;
            self->writing_ = false;
            return;
        }
        self->write_next();
    });
}

inline void Connection::close() {
    closed_ = true;
    boost::system::error_code ec;
    if (ws_) beast::get_lowest_layer(*ws_).socket().close(ec);
    else stream_.socket().close(ec);
}

}  // namespace smal::service

#endif  // SMAL_SERVICE_HPP
