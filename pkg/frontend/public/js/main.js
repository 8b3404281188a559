import { ApiClient } from "./api.js";
import { ConsoleSession } from "./controller.js";
import { clearSession, defaultApiBase, loadSession, saveSession } from "./session.js";
import { el, render } from "./ui.js";
const root = document.getElementById("app");
let active = null;
function showLogin(prefillBase, error) {
    const base = el("input", { type: "text", size: "40" });
    base.value = prefillBase;
    const token = el("input", { type: "password", size: "40", placeholder: "token" });
    root.replaceChildren(el("div", { class: "login" }, el("h1", {}, "caremesh console"), error ? el("p", { class: "notice" }, error) : null, el("form", {
        onsubmit: (event) => {
            event.preventDefault();
            void connect(base.value.trim().replace(/\/$/, ""), token.value.trim());
        },
    }, el("label", {}, "API base URL", base), el("label", {}, "Access token", token), el("button", { type: "submit" }, "Connect"))));
}
async function connect(base, token) {
    active?.stop();
    const session = new ConsoleSession(new ApiClient(base, token));
    try {
        await session.start();
    }
    catch (error) {
        session.stop();
        showLogin(base, error instanceof Error ? error.message : String(error));
        return;
    }
    saveSession({ base, token });
    active = session;
    // Full re-renders are cheap but would wipe in-progress form input; hold
    // them while the user is inside a field and flush on focusout.
    let deferred = false;
    const editing = () => {
        const focused = document.activeElement;
        return (focused !== null &&
            root.contains(focused) &&
            ["INPUT", "TEXTAREA", "SELECT"].includes(focused.tagName));
    };
    const rerender = () => {
        if (editing()) {
            deferred = true;
            return;
        }
        deferred = false;
        render(root, session);
    };
    root.addEventListener("focusout", () => {
        if (deferred)
            setTimeout(rerender, 0);
    });
    session.subscribe(rerender);
    rerender();
    const logout = el("button", {
        class: "logout",
        onclick: () => {
            clearSession();
            session.stop();
            active = null;
            showLogin(base);
        },
    }, "Disconnect");
    document.body.append(logout);
}
async function boot() {
    const saved = loadSession();
    const base = saved?.base ?? (await defaultApiBase());
    if (saved) {
        await connect(saved.base, saved.token);
    }
    else {
        showLogin(base);
    }
}
void boot();
