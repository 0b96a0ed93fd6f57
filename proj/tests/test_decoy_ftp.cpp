#include <catch_amalgamated.hpp>

#include "mantis/decoy_ftp.hpp"
#include "mantis/net.hpp"
#include "support.hpp"

using namespace mantis;
using namespace mantis::testing;

namespace {

struct Harness {
    explicit Harness(std::optional<Payload> payload = sample_payload())
        : sink(std::move(payload)), session(FtpDecoyConfig{}, &sink, data, "ftp-decoy-1", {"10.0.0.9", 50123}) {}

    // Mirrors FtpServer: replies carrying data go over the data channel.
    FtpReply send(std::string_view line) {
        auto r = session.handle(std::string(line) + "\r\n");
        if (r.data) data.transfer(*r.data);
        return r;
    }

    FakeDataChannel data;
    RecordingSink sink;
    FtpDecoySession session;
};

}  // namespace

TEST_CASE("banner mimics vsftpd", "[ftp]") {
    CHECK(ftp_banner() == "220 (vsFTPd 3.0.3)\r\n");
    CHECK(ftp_banner() == ftp_banner());
    // "220 (vsFTPd 3.0.3)" is 18 bytes, plus CRLF
    CHECK(ftp_banner().size() == 20);
}

TEST_CASE("anonymous login splices the concealed payload on the 230 line", "[ftp]") {
    Harness h;
    auto r1 = h.send("USER anonymous");
    CHECK(r1.control == "331 Please specify the password.\r\n");
    CHECK(r1.events.empty());
    CHECK(h.session.session().state == FtpAuthState::awaiting_pass);

    auto r2 = h.send("PASS x");
    CHECK(r2.control.starts_with("230 Login successful. \x1b[8m"));
    CHECK(r2.control.ends_with("\x1b[0m\r\n"));
    CHECK(r2.control == "230 Login successful. " + sample_payload().assembled + "\r\n");
    REQUIRE(r2.events.size() == 1);
    CHECK(r2.events[0].kind == ActivationKind::ftp_anonymous_login);
    CHECK(r2.events[0].peer.host == "10.0.0.9");
    CHECK(h.session.session().state == FtpAuthState::authenticated);
    CHECK(r2.control.size() <= kPayloadMaxBytes + 64);

    CHECK(h.send("SYST").control == "215 UNIX Type: L8\r\n");
    CHECK(h.send("TYPE I").control == "200 Switching to Binary mode.\r\n");
}

TEST_CASE("unknown and out-of-order commands", "[ftp]") {
    Harness h;
    auto noop = h.send("NOOP");
    CHECK(noop.control == "502 Command not implemented.\r\n");
    CHECK(noop.events.empty());
    CHECK(h.send("PASS x").control == "503 Login with USER first.\r\n");
    CHECK(h.send("LIST").control.starts_with("530 Please login"));
    CHECK(h.send("RETR credentials.txt").control.starts_with("530 Please login"));
    CHECK(h.sink.count() == 0);
    auto quit = h.send("QUIT");
    CHECK(quit.control == "221 Goodbye.\r\n");
    CHECK(quit.close);
}

TEST_CASE("replayed transcript fires each activation kind once", "[ftp]") {
    Harness h;
    const std::vector<std::string> transcript = {
        "USER anonymous", "PASS a@b", "SYST", "PWD", "PASV", "LIST", "USER anonymous", "PASS again",
        "PORT 127,0,0,1,156,64", "RETR credentials.txt", "PASV", "RETR backup.tar.gz", "USER ftp", "PASS z",
    };
    std::vector<ActivationEvent> all;
    std::vector<std::string> logins;
    for (const auto& line : transcript) {
        auto r = h.send(line);
        all.insert(all.end(), r.events.begin(), r.events.end());
        if (line.starts_with("PASS")) logins.push_back(r.control);
    }
    std::size_t anon = std::count_if(all.begin(), all.end(), [](auto& e) { return e.kind == ActivationKind::ftp_anonymous_login; });
    std::size_t retr = std::count_if(all.begin(), all.end(), [](auto& e) { return e.kind == ActivationKind::ftp_fake_retr; });
    CHECK(anon == 1);
    CHECK(retr == 1);
    CHECK(all.size() == 2);
    for (const auto& l : logins) CHECK(l.starts_with("230 Login successful."));
    REQUIRE(h.data.sent.size() == 3);
    CHECK(h.data.sent[0].find("credentials.txt") != std::string::npos);
    CHECK(h.data.sent[0].find("drwxr-xr-x 1 root group 4096 Feb 27 07:53 db_dumps\r\n") != std::string::npos);
    CHECK(h.data.sent[1] == sample_payload().assembled + "\n");
    CHECK(h.data.active->port == 156 * 256 + 64);
}

TEST_CASE("non-anonymous logins never see escape bytes", "[ftp]") {
    Harness h;
    for (auto user : {"root", "admin", "guest"}) {
        CHECK(h.send(std::string("USER ") + user).control == "331 Please specify the password.\r\n");
        auto r = h.send("PASS hunter2");
        CHECK(r.control == "530 Login incorrect.\r\n");
        CHECK(r.control.find('\x1b') == std::string::npos);
        CHECK(h.session.session().state == FtpAuthState::awaiting_user);
    }
    CHECK(h.sink.count() == 0);
}

TEST_CASE("unarmed decoy behaves as a plain honeypot", "[ftp]") {
    Harness h(std::nullopt);
    h.send("USER anonymous");
    auto r = h.send("PASS x");
    CHECK(r.control == "230 Login successful.\r\n");
    CHECK(r.events.size() == 1);
}

TEST_CASE("decoy navigation and data channel errors", "[ftp]") {
    Harness h;
    h.send("USER anonymous");
    h.send("PASS x");
    CHECK(h.send("LIST").control == "425 Use PORT or PASV first.\r\n");
    CHECK(h.send("CWD db_dumps").control == "250 Directory successfully changed.\r\n");
    CHECK(h.send("PWD").control == "257 \"/db_dumps\" is the current directory\r\n");
    CHECK(h.send("CWD nowhere").control == "550 Failed to change directory.\r\n");
    CHECK(h.send("CWD ..").control == "250 Directory successfully changed.\r\n");
    CHECK(h.send("PORT 1,2,3").control == "500 Illegal PORT command.\r\n");
    CHECK(h.send("PASV").control == "227 Entering Passive Mode (127,0,0,1,156,65).\r\n");
    CHECK(h.send("RETR nothing.txt").control == "550 Failed to open file.\r\n");
}

TEST_CASE("FTP decoy over TCP with a passive data channel", "[ftp][net]") {
    RecordingSink sink(sample_payload());
    FtpServer server(Listener("127.0.0.1", 0), "ftp-decoy", ftp_decoy_factory(FtpDecoyConfig{}, &sink),
                     PortRange{20000, 60000});
    auto ctl = connect_tcp({"127.0.0.1", server.port()});
    LineReader lines(ctl);
    auto expect_line = [&] { return lines.next(milliseconds(2000)).value_or("<timeout>"); };
    CHECK(expect_line() == "220 (vsFTPd 3.0.3)");
    ctl.write_all("USER anonymous\r\n");
    CHECK(expect_line() == "331 Please specify the password.");
    ctl.write_all("PASS guest\n");  // bare LF tolerated
    auto login = expect_line();
    CHECK(login.starts_with("230 Login successful. \x1b[8m"));
    ctl.write_all("PASV\r\n");
    auto pasv = expect_line();
    REQUIRE(pasv.starts_with("227 Entering Passive Mode ("));
    auto ep = parse_host_port(pasv.substr(27, pasv.find(')') - 27));
    REQUIRE(ep);
    auto data = connect_tcp(*ep);
    ctl.write_all("LIST\r\n");
    CHECK(expect_line() == "150 Here comes the directory listing.");
    auto listing = data.read_all(milliseconds(2000));
    CHECK(listing.find("credentials.txt") != std::string::npos);
    CHECK(expect_line() == "226 Directory send OK.");
    ctl.write_all(std::string(600, 'A') + "\r\n");
    CHECK(expect_line() == "500 Command line too long.");
    ctl.write_all("QUIT\r\n");
    CHECK(expect_line() == "221 Goodbye.");
    server.stop();
    CHECK(sink.count() == 1);
}
