namespace taskmode {}
