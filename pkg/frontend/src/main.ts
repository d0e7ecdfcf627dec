import { RpsApi } from "./api.js";
import { PlayController } from "./controller.js";
import { buildUi, downloadExport } from "./ui.js";

function baseUrl(): string {
  const param = new URLSearchParams(window.location.search).get("api");
  return param ?? "http://127.0.0.1:8080";
}

function bootstrap(): void {
  const root = document.getElementById("app");
  if (!root) {
    throw new Error("missing #app element");
  }
  let render: (state: any) => void = () => undefined;
  const controller = new PlayController(new RpsApi(baseUrl()), (state) => render(state));
  render = buildUi(root, {
    onMove: (action) => void controller.submitMove(action),
    onStart: () => void controller.startGame({}),
    onExport: () =>
      void controller.exportGame().then((game) => {
        if (game) {
          downloadExport(document, game);
        }
      }),
  });
  render(controller.state);
}

bootstrap();
