import { ApiClient } from "./api.js";
import { createApp } from "./ui.js";

const api = new ApiClient((input, init) => fetch(input, init));
createApp(document.getElementById("app") as HTMLElement, api);
