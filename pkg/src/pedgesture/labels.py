from enum import IntEnum


class GestureClass(IntEnum):
    STOP = 0
    GO = 1
    THANK_GREET = 2
    NO_GESTURE = 3

    @property
    def slug(self) -> str:
        return self.name.lower()

    @property
    def display(self) -> str:
        return _DISPLAY[self]

    @classmethod
    def parse(cls, value) -> "GestureClass":
        """Accept an enum member, integer code, or slug such as ``"thank_greet"``."""
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().lower().replace("&", "_").replace(" ", "_").replace("-", "_")
            while "__" in key:
                key = key.replace("__", "_")
            try:
                return cls[key.upper()]
            except KeyError:
                raise ValueError(f"unknown gesture label {value!r}") from None
        return cls(int(value))


_DISPLAY = {
    GestureClass.STOP: "Stop",
    GestureClass.GO: "Go",
    GestureClass.THANK_GREET: "Thank & Greet",
    GestureClass.NO_GESTURE: "No Gesture",
}

N_CLASSES = len(GestureClass)
